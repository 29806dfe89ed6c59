//! KKT machinery for a fixed active set: affine primal/dual solution maps,
//! critical regions, and the reduction of degenerate multipliers to a
//! linearly independent support.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::CondensedAvi;
use crate::linalg::{condition_number, inf_norm_vec, lstsq, rows_independent, select_entries, select_rows, RowBasis};
use crate::polyhedra::Polyhedron;

const MAX_KKT_CONDITION: f64 = 1e12;

/// Sorted, duplicate-free list of constraint-row indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActiveSet(Vec<usize>);

impl ActiveSet {
    pub fn new(mut idx: Vec<usize>) -> Self {
        idx.sort_unstable();
        idx.dedup();
        Self(idx)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn with(&self, i: usize) -> Self {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&i) {
            v.insert(pos, i);
        }
        Self(v)
    }

    pub fn without(&self, i: usize) -> Self {
        Self(self.0.iter().copied().filter(|&j| j != i).collect())
    }
}

impl From<Vec<usize>> for ActiveSet {
    fn from(v: Vec<usize>) -> Self {
        Self::new(v)
    }
}

/// Affine solution maps of one active set:
/// `u*(x) = ku·x + ku0`, `λ_A(x) = kl·x + kl0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveMaps {
    pub ku: DMatrix<f64>,
    pub ku0: DVector<f64>,
    pub kl: DMatrix<f64>,
    pub kl0: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PieceFlag {
    Full,
    LowerDimensional,
}

/// One affine piece of the explicit map together with its critical region.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivePiece {
    pub active_set: ActiveSet,
    pub ku: DMatrix<f64>,
    pub ku0: DVector<f64>,
    pub kl: DMatrix<f64>,
    pub kl0: DVector<f64>,
    /// `{x : E x ≤ e}`, box faces included.
    pub region: Polyhedron,
    pub flag: PieceFlag,
}

impl ActivePiece {
    pub fn primal(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.ku * x + &self.ku0
    }

    /// Multipliers over the active rows only.
    pub fn dual_active(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.kl * x + &self.kl0
    }

    /// Multipliers padded with zeros on inactive rows.
    pub fn dual(&self, x: &DVector<f64>, p: usize) -> DVector<f64> {
        let la = self.dual_active(x);
        let mut lam = DVector::zeros(p);
        for (k, &i) in self.active_set.indices().iter().enumerate() {
            lam[i] = la[k];
        }
        lam
    }
}

/// Solve the KKT linear system of an active set for its affine maps.
pub fn solve_kkt_active(avi: &CondensedAvi, set: &ActiveSet) -> Result<ActiveMaps> {
    let nu = avi.n_inputs();
    let n = avi.n;
    let idx = set.indices();
    if idx.iter().any(|&i| i >= avi.n_constraints()) {
        return Err(Error::Dimension("active index out of range".into()));
    }
    if !rows_independent(&avi.c_u, idx) {
        return Err(Error::RankDeficient);
    }
    let na = idx.len();
    let dim = nu + na;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (nu, nu)).copy_from(&avi.h);
    let ca = select_rows(&avi.c_u, idx);
    if na > 0 {
        kkt.view_mut((0, nu), (nu, na)).copy_from(&ca.transpose());
        kkt.view_mut((nu, 0), (na, nu)).copy_from(&ca);
    }
    // [H Cᵀ; C 0][u; λ] = −[F; D_A] x − [f; −c_A]
    let mut rhs = DMatrix::zeros(dim, n + 1);
    rhs.view_mut((0, 0), (nu, n)).copy_from(&(-&avi.f_x));
    rhs.view_mut((0, n), (nu, 1)).copy_from(&(-&avi.f));
    if na > 0 {
        rhs.view_mut((nu, 0), (na, n)).copy_from(&(-select_rows(&avi.d_x, idx)));
        rhs.view_mut((nu, n), (na, 1)).copy_from(&select_entries(&avi.c, idx));
    }

    let scale = 1.0 + rhs.norm();
    let lu = kkt.clone().lu();
    let mut sol = lu.solve(&rhs);
    if let Some(s) = sol.as_mut() {
        // one step of iterative refinement
        let r = &rhs - &kkt * &*s;
        if let Some(corr) = lu.solve(&r) {
            *s += corr;
        }
    }
    let good = sol
        .as_ref()
        .is_some_and(|s| (&kkt * s - &rhs).norm() <= 1e-10 * scale && s.iter().all(|v| v.is_finite()));
    let sol = if good {
        sol.expect("checked above")
    } else {
        let cond = condition_number(&kkt);
        if cond > MAX_KKT_CONDITION {
            return Err(Error::NumericalFailure(format!(
                "KKT matrix condition number {cond:.2e} exceeds {MAX_KKT_CONDITION:.0e}"
            )));
        }
        lstsq(&kkt, &rhs)?.0
    };
    Ok(ActiveMaps {
        ku: sol.view((0, 0), (nu, n)).into_owned(),
        ku0: sol.view((0, n), (nu, 1)).column(0).into_owned(),
        kl: sol.view((nu, 0), (na, n)).into_owned(),
        kl0: sol.view((nu, n), (na, 1)).column(0).into_owned(),
    })
}

/// Assemble the piece of an active set: its affine maps and the halfspaces
/// of its critical region (primal feasibility of the inactive rows, dual
/// nonnegativity of the active rows, and the parameter set).
pub fn build_piece(avi: &CondensedAvi, set: &ActiveSet) -> Result<ActivePiece> {
    let maps = solve_kkt_active(avi, set)?;
    let n = avi.n;
    let p = avi.n_constraints();
    let inactive: Vec<usize> = (0..p).filter(|&i| !set.contains(i)).collect();
    let px = avi.parameter_set();
    let rows = inactive.len() + set.len() + px.n_rows();
    let mut e_mat = DMatrix::zeros(rows, n);
    let mut e = DVector::zeros(rows);
    let mut r = 0;
    for &i in &inactive {
        let ci = avi.c_u.row(i);
        e_mat.row_mut(r).copy_from(&(ci * &maps.ku + avi.d_x.row(i)));
        e[r] = avi.c[i] - (ci * &maps.ku0)[0];
        r += 1;
    }
    for k in 0..set.len() {
        e_mat.row_mut(r).copy_from(&(-maps.kl.row(k)));
        e[r] = maps.kl0[k];
        r += 1;
    }
    e_mat.view_mut((r, 0), (px.n_rows(), n)).copy_from(&px.a);
    e.rows_mut(r, px.n_rows()).copy_from(&px.b);
    let raw = Polyhedron::new(e_mat, e);
    let region = raw.normalize().unwrap_or(raw);
    Ok(ActivePiece {
        active_set: set.clone(),
        ku: maps.ku,
        ku0: maps.ku0,
        kl: maps.kl,
        kl0: maps.kl0,
        region,
        flag: PieceFlag::Full,
    })
}

/// `max(‖Hu+Fx⁰+f+Cᵀλ‖_∞, ‖(Cu+Dx⁰−c)₊‖_∞, ‖(λ)₋‖_∞, |λᵀ(Cu+Dx⁰−c)|)`.
pub fn kkt_residual(avi: &CondensedAvi, u: &DVector<f64>, lambda: &DVector<f64>, x0: &DVector<f64>) -> f64 {
    let stat = avi.pseudo_gradient(u, x0) + avi.c_u.transpose() * lambda;
    let slack = &avi.c_u * u + &avi.d_x * x0 - &avi.c;
    let primal = slack.iter().fold(0.0f64, |m, v| m.max(*v));
    let dual = lambda.iter().fold(0.0f64, |m, v| m.max(-*v));
    let comp = lambda.dot(&slack).abs();
    inf_norm_vec(&stat).max(primal).max(dual).max(comp)
}

/// Replace a nonnegative multiplier supported on a rank-deficient active set
/// by one supported on a linearly independent subset, preserving `Cᵀλ`.
///
/// `lambda` is indexed like `set.indices()`.
pub fn dual_reduce(avi: &CondensedAvi, set: &ActiveSet, lambda: &DVector<f64>) -> Result<(ActiveSet, DVector<f64>)> {
    if lambda.len() != set.len() {
        return Err(Error::Dimension("multiplier length differs from active set size".into()));
    }
    if rows_independent(&avi.c_u, set.indices()) {
        return Ok((set.clone(), lambda.clone()));
    }
    let mut idx: Vec<usize> = set.indices().to_vec();
    let mut lam: Vec<f64> = lambda.iter().copied().collect();
    let lam_scale = lam.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zero = 1e-14 * (1.0 + lam_scale);

    loop {
        // keep only the support of the multiplier
        let keep: Vec<usize> = (0..idx.len()).filter(|&k| lam[k] > zero).collect();
        idx = keep.iter().map(|&k| idx[k]).collect();
        lam = keep.iter().map(|&k| lam[k]).collect();

        let mut basis = RowBasis::new();
        let dependent = idx
            .iter()
            .position(|&i| !basis.push(avi.c_u.row(i).transpose().into_owned()));
        let Some(kpos) = dependent else {
            let order = ActiveSet::new(idx.clone());
            let out = DVector::from_fn(order.len(), |r, _| {
                let pos = idx.iter().position(|&i| i == order.indices()[r]).expect("same set");
                lam[pos]
            });
            return Ok((order, out));
        };

        // C_k = Σ_{j<k} α_j C_j
        let prev = select_rows(&avi.c_u, &idx[..kpos]);
        let target = avi.c_u.row(idx[kpos]).transpose().into_owned();
        let (alpha, res) = lstsq(&prev.transpose(), &DMatrix::from_column_slice(target.len(), 1, target.as_slice()))?;
        if res > 1e-8 {
            return Err(Error::NumericalFailure(format!(
                "no dependent-row coefficients found (relative residual {res:.2e})"
            )));
        }
        let lk = lam[kpos];
        let mut shifted = lam.clone();
        for j in 0..kpos {
            shifted[j] += alpha[(j, 0)] * lk;
        }
        shifted[kpos] = 0.0;

        if shifted.iter().all(|v| *v >= 0.0) {
            lam = shifted;
            continue;
        }
        // convex combination that zeroes the first multiplier to hit zero
        let mut gamma = f64::NEG_INFINITY;
        let mut hit = usize::MAX;
        for j in 0..idx.len() {
            if shifted[j] < 0.0 {
                let g = shifted[j] / (shifted[j] - lam[j]);
                let better = g > gamma + 1e-12 * gamma.abs().max(1.0)
                    || (g >= gamma - 1e-12 * gamma.abs().max(1.0) && idx[j] < idx.get(hit).copied().unwrap_or(usize::MAX));
                if better {
                    gamma = gamma.max(g);
                    hit = j;
                }
            }
        }
        let mut mixed: Vec<f64> = shifted
            .iter()
            .zip(&lam)
            .map(|(s, l)| (1.0 - gamma) * s + gamma * l)
            .collect();
        mixed[hit] = 0.0;
        for v in &mut mixed {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        lam = mixed;
    }
}
