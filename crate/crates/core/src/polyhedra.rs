//! Halfspace polyhedra: feasibility by max-margin phase-I LP, membership, and
//! Euclidean projection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpOutcome};

/// Margin below which a nonempty polyhedron counts as lower-dimensional.
pub const INTERIOR_EPS: f64 = 1e-8;
/// Rows shorter than this are treated as constant inequalities `0 ≤ b`.
const ZERO_ROW: f64 = 1e-10;

/// `{z : a z ≤ b}`; zero rows mean the whole space.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// Max-margin exceeds [`INTERIOR_EPS`].
    Feasible { witness: DVector<f64>, margin: f64 },
    /// Nonempty within tolerance but (numerically) lower-dimensional.
    WeaklyFeasible { witness: DVector<f64>, margin: f64 },
    Empty { margin: f64 },
}

impl Feasibility {
    pub fn witness(&self) -> Option<&DVector<f64>> {
        match self {
            Feasibility::Feasible { witness, .. } | Feasibility::WeaklyFeasible { witness, .. } => {
                Some(witness)
            }
            Feasibility::Empty { .. } => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Feasibility::Empty { .. })
    }

    pub fn margin(&self) -> f64 {
        match self {
            Feasibility::Feasible { margin, .. }
            | Feasibility::WeaklyFeasible { margin, .. }
            | Feasibility::Empty { margin } => *margin,
        }
    }
}

/// Rows rescaled to unit norm; `None` when a constant row is violated.
struct Normalized {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Polyhedron {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        assert_eq!(a.nrows(), b.len(), "polyhedron rows and rhs disagree");
        Self { a, b }
    }

    pub fn whole_space(dim: usize) -> Self {
        Self::new(DMatrix::zeros(0, dim), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn stack(&self, other: &Polyhedron) -> Polyhedron {
        let d = self.dim().max(other.dim());
        let k1 = self.n_rows();
        let k2 = other.n_rows();
        let mut a = DMatrix::zeros(k1 + k2, d);
        if k1 > 0 {
            a.view_mut((0, 0), (k1, self.dim())).copy_from(&self.a);
        }
        if k2 > 0 {
            a.view_mut((k1, 0), (k2, other.dim())).copy_from(&other.a);
        }
        let mut b = DVector::zeros(k1 + k2);
        b.rows_mut(0, k1).copy_from(&self.b);
        b.rows_mut(k1, k2).copy_from(&other.b);
        Polyhedron::new(a, b)
    }

    /// `a z ≤ b + tol` elementwise.
    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        (0..self.n_rows()).all(|i| self.a.row(i).dot(&z.transpose()) <= self.b[i] + tol)
    }

    /// Largest violation `max_i (a_i z − b_i)`, or `-inf` with no rows.
    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        (0..self.n_rows())
            .map(|i| self.a.row(i).dot(&z.transpose()) - self.b[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn normalized(&self) -> Option<Normalized> {
        let d = self.dim();
        let mut keep = Vec::new();
        for i in 0..self.n_rows() {
            let nrm = self.a.row(i).norm();
            if nrm <= ZERO_ROW {
                if self.b[i] < -1e-9 {
                    return None;
                }
            } else {
                keep.push((i, nrm));
            }
        }
        let a = DMatrix::from_fn(keep.len(), d, |r, j| self.a[(keep[r].0, j)] / keep[r].1);
        let b = DVector::from_fn(keep.len(), |r, _| self.b[keep[r].0] / keep[r].1);
        Some(Normalized { a, b })
    }

    /// A copy with every row scaled to unit norm and constant rows removed;
    /// `None` if a constant row is violated.
    pub fn normalize(&self) -> Option<Polyhedron> {
        self.normalized().map(|n| Polyhedron::new(n.a, n.b))
    }

    /// Maximize the margin `s ≤ 1` with `â z + s ≤ b̂` over unit-norm rows.
    pub fn feasibility(&self) -> Result<Feasibility> {
        self.feasibility_with_equalities(None)
    }

    /// Like [`Self::feasibility`], with additional equality rows that take no
    /// part in the margin.
    pub fn feasibility_with_equalities(
        &self,
        eq: Option<(&DMatrix<f64>, &DVector<f64>)>,
    ) -> Result<Feasibility> {
        let d = self.dim();
        let Some(norm) = self.normalized() else {
            return Ok(Feasibility::Empty { margin: f64::NEG_INFINITY });
        };
        let k = norm.a.nrows();
        let has_eq = eq.is_some_and(|(a, _)| a.nrows() > 0);
        if k == 0 && !has_eq {
            return Ok(Feasibility::Feasible {
                witness: DVector::zeros(d),
                margin: 1.0,
            });
        }
        // variables: z⁺ (d), z⁻ (d), s⁺, s⁻
        let nv = 2 * d + 2;
        let mut a_ub = DMatrix::zeros(k + 1, nv);
        let mut b_ub = DVector::zeros(k + 1);
        for i in 0..k {
            for j in 0..d {
                a_ub[(i, j)] = norm.a[(i, j)];
                a_ub[(i, d + j)] = -norm.a[(i, j)];
            }
            a_ub[(i, 2 * d)] = 1.0;
            a_ub[(i, 2 * d + 1)] = -1.0;
            b_ub[i] = norm.b[i];
        }
        a_ub[(k, 2 * d)] = 1.0;
        a_ub[(k, 2 * d + 1)] = -1.0;
        b_ub[k] = 1.0;
        let (a_eq, b_eq) = match eq {
            Some((ae, be)) => {
                let mut m = DMatrix::zeros(ae.nrows(), nv);
                for i in 0..ae.nrows() {
                    for j in 0..d {
                        m[(i, j)] = ae[(i, j)];
                        m[(i, d + j)] = -ae[(i, j)];
                    }
                }
                (m, be.clone())
            }
            None => (DMatrix::zeros(0, nv), DVector::zeros(0)),
        };
        let mut c = DVector::zeros(nv);
        c[2 * d] = -1.0;
        c[2 * d + 1] = 1.0;
        let outcome = lp::solve(&LinearProgram { c, a_ub, b_ub, a_eq, b_eq })?;
        let x = match outcome {
            LpOutcome::Optimal { x, .. } => x,
            LpOutcome::Infeasible => return Ok(Feasibility::Empty { margin: f64::NEG_INFINITY }),
            LpOutcome::Unbounded => {
                return Err(Error::LpFailure("phase-I margin problem is unbounded".into()))
            }
        };
        let witness = DVector::from_fn(d, |j, _| x[j] - x[d + j]);
        // recompute the margin from the witness rather than trusting the tableau
        let margin = (0..k)
            .map(|i| norm.b[i] - norm.a.row(i).dot(&witness.transpose()))
            .fold(1.0f64, f64::min);
        if margin > INTERIOR_EPS {
            Ok(Feasibility::Feasible { witness, margin })
        } else if margin < -INTERIOR_EPS {
            Ok(Feasibility::Empty { margin })
        } else {
            let witness = if margin < 0.0 && !has_eq {
                self.project(&witness).unwrap_or(witness)
            } else {
                witness
            };
            Ok(Feasibility::WeaklyFeasible { witness, margin })
        }
    }

    /// Euclidean projection by a dual active-set method (identity Hessian).
    pub fn project(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let norm = self.normalized().ok_or(Error::EmptySet)?;
        project_normalized(&norm.a, &norm.b, z)
    }
}

fn solve_normal(n: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    // least-squares coefficients r with N r ≈ rhs, via QR of N (columns = active rows)
    if n.ncols() == 0 {
        return Some(DVector::zeros(0));
    }
    let qr = n.clone().qr();
    let qtb = qr.q().transpose() * rhs;
    qr.r().solve_upper_triangular(&qtb)
}

fn project_normalized(a: &DMatrix<f64>, b: &DVector<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
    let k = a.nrows();
    let d = a.ncols();
    let mut y = z.clone();
    let mut active: Vec<usize> = Vec::new();
    let mut lam: Vec<f64> = Vec::new();
    let scale = 1.0 + z.amax();
    let tol = |i: usize| 1e-12 * (scale + b[i].abs());
    let max_outer = 10 * (k + d) + 100;

    let row = |i: usize| a.row(i).transpose();
    let active_matrix = |act: &[usize]| DMatrix::from_fn(d, act.len(), |r, c| a[(act[c], r)]);

    for _ in 0..max_outer {
        let mut q = None;
        let mut worst = 0.0;
        for i in 0..k {
            if active.contains(&i) {
                continue;
            }
            let v = a.row(i).dot(&y.transpose()) - b[i];
            if v > tol(i) && v > worst {
                worst = v;
                q = Some(i);
            }
        }
        let Some(q) = q else {
            return Ok(polish(a, b, z, &active, &lam).unwrap_or(y));
        };
        let aq = row(q);
        let mut lam_q = 0.0;
        let mut inner = 0;
        loop {
            inner += 1;
            if inner > k + d + 10 {
                return Err(Error::NumericalFailure("projection inner loop stalled".into()));
            }
            let nmat = active_matrix(&active);
            let r = solve_normal(&nmat, &aq)
                .ok_or_else(|| Error::NumericalFailure("singular active set in projection".into()))?;
            let dir = &aq - &nmat * &r;
            let dd = dir.norm_squared();
            let viol = aq.dot(&y) - b[q];
            let t1 = if dd > 1e-20 { viol / dd } else { f64::INFINITY };
            let mut t2 = f64::INFINITY;
            let mut block = None;
            for (idx, &rj) in r.iter().enumerate() {
                if rj > 1e-14 {
                    let t = lam[idx] / rj;
                    if t < t2 {
                        t2 = t;
                        block = Some(idx);
                    }
                }
            }
            if !t1.is_finite() && !t2.is_finite() {
                return Err(Error::EmptySet);
            }
            let t = t1.min(t2);
            y -= &dir * t;
            for (l, rj) in lam.iter_mut().zip(r.iter()) {
                *l -= t * rj;
            }
            lam_q += t;
            if t2 < t1 {
                let j = block.expect("blocking constraint");
                active.remove(j);
                lam.remove(j);
            } else {
                for l in &mut lam {
                    *l = l.max(0.0);
                }
                active.push(q);
                lam.push(lam_q);
                break;
            }
        }
    }
    Err(Error::NumericalFailure("projection did not terminate".into()))
}

/// Recompute the projection exactly from the final active set.
fn polish(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    z: &DVector<f64>,
    active: &[usize],
    lam: &[f64],
) -> Option<DVector<f64>> {
    if active.is_empty() {
        return Some(z.clone());
    }
    let d = a.ncols();
    let n = DMatrix::from_fn(d, active.len(), |r, c| a[(active[c], r)]);
    let bw = DVector::from_fn(active.len(), |i, _| b[active[i]]);
    // (NᵀN) λ = Nᵀz − b_W
    let gram = n.transpose() * &n;
    let l = gram.cholesky()?.solve(&(n.transpose() * z - bw));
    if l.iter().zip(lam).any(|(v, _)| *v < -1e-9) {
        return None;
    }
    let y = z - &n * l;
    let ok = (0..a.nrows()).all(|i| a.row(i).dot(&y.transpose()) - b[i] <= 1e-11 * (1.0 + b[i].abs()));
    ok.then_some(y)
}
