//! Game primitives, validation and condensation into the parametric AVI.
//!
//! Stacking convention: the decision vector is `u = col_i(col_t u_i^t)`, so
//! agent `i` owns the contiguous block starting at `Σ_{j<i} T·m_j`. Predicted
//! states are `x = col(x^1, …, x^T)`, and every state-dependent term (costs
//! and state constraints) acts on those `T` successor states.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{
    inf_norm_mat, kron_eye, mat_from_rows, mat_to_rows, min_sym_eig, repeat_vec, rows_width,
};
use crate::polyhedra::Polyhedron;
use crate::riccati::TerminalIngredients;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    FiniteHorizon,
    InfiniteHorizon,
}

/// Axis-aligned box of admissible initial states.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self {
            lo: DVector::from_vec(lo),
            hi: DVector::from_vec(hi),
        }
    }

    pub fn cube(n: usize, half_width: f64) -> Self {
        Self {
            lo: DVector::from_element(n, -half_width),
            hi: DVector::from_element(n, half_width),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lo + &self.hi) * 0.5
    }

    /// `{x : x ≤ hi, −x ≤ −lo}`.
    pub fn to_polyhedron(&self) -> Polyhedron {
        let n = self.dim();
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for k in 0..n {
            a[(k, k)] = 1.0;
            b[k] = self.hi[k];
            a[(n + k, k)] = -1.0;
            b[n + k] = -self.lo[k];
        }
        Polyhedron::new(a, b)
    }
}

/// Raw primitives of a linear-quadratic dynamic game.
#[derive(Debug, Clone)]
pub struct GameSpec {
    pub a: DMatrix<f64>,
    pub b: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub stage_d: DMatrix<f64>,
    pub d: DVector<f64>,
    pub stage_g: Vec<DMatrix<f64>>,
    pub g: DVector<f64>,
    pub horizon: usize,
    pub x_box: ParamBox,
    pub mode: Mode,
    /// Constant additive term of the dynamics, `x⁺ = Ax + Σ B_i u_i + w`.
    pub drift: DVector<f64>,
    /// Also require `D x⁰ ≤ d`, as a restriction of the parameter set.
    pub constrain_x0: bool,
}

impl GameSpec {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_agents(&self) -> usize {
        self.b.len()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.b.iter().map(|b| b.ncols()).collect()
    }

    /// Unconstrained game with zero drift and no stage constraints.
    pub fn unconstrained(
        a: DMatrix<f64>,
        b: Vec<DMatrix<f64>>,
        q: Vec<DMatrix<f64>>,
        r: Vec<DMatrix<f64>>,
        horizon: usize,
        x_box: ParamBox,
    ) -> Self {
        let n = a.nrows();
        let stage_g = b.iter().map(|bi| DMatrix::zeros(0, bi.ncols())).collect();
        Self {
            a,
            b,
            q,
            r,
            stage_d: DMatrix::zeros(0, n),
            d: DVector::zeros(0),
            stage_g,
            g: DVector::zeros(0),
            horizon,
            x_box,
            mode: Mode::FiniteHorizon,
            drift: DVector::zeros(n),
            constrain_x0: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GameSpecFile = serde_json::from_str(text)?;
        raw.into_spec()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GameSpecFile::from_spec(self))?)
    }
}

/// On-disk layout of a [`GameSpec`]; matrices are row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct GameSpecFile {
    pub A: Vec<Vec<f64>>,
    pub B: Vec<Vec<Vec<f64>>>,
    pub Q: Vec<Vec<Vec<f64>>>,
    pub R: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub stage_D: Vec<Vec<f64>>,
    #[serde(default)]
    pub d: Vec<f64>,
    #[serde(default)]
    pub stage_G: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub g: Vec<f64>,
    pub T: usize,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub constrain_x0: bool,
}

impl GameSpecFile {
    // Matrices keep their own width so that `validate_game` can report
    // mismatches instead of failing at parse time.
    fn into_spec(self) -> Result<GameSpec> {
        let own = |rows: &[Vec<f64>], fallback: usize, field: &str| {
            mat_from_rows(rows, rows_width(rows).unwrap_or(fallback), field)
        };
        let a = own(&self.A, 0, "A")?;
        let n = a.nrows();
        let b = self
            .B
            .iter()
            .enumerate()
            .map(|(i, m)| own(m, 0, &format!("B[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let q = self
            .Q
            .iter()
            .enumerate()
            .map(|(i, m)| own(m, 0, &format!("Q[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let r = self
            .R
            .iter()
            .enumerate()
            .map(|(i, m)| own(m, 0, &format!("R[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let stage_d = own(&self.stage_D, n, "stage_D")?;
        let stage_g = if self.stage_G.is_empty() {
            b.iter().map(|bi| DMatrix::zeros(0, bi.ncols())).collect()
        } else {
            self.stage_G
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let mi = b.get(i).map_or(0, |bi| bi.ncols());
                    own(m, mi, &format!("stage_G[{i}]"))
                })
                .collect::<Result<Vec<_>>>()?
        };
        Ok(GameSpec {
            a,
            b,
            q,
            r,
            stage_d,
            d: DVector::from_vec(self.d),
            stage_g,
            g: DVector::from_vec(self.g),
            horizon: self.T,
            x_box: ParamBox::new(self.box_lo, self.box_hi),
            mode: self.mode,
            drift: self.w.map_or_else(|| DVector::zeros(n), DVector::from_vec),
            constrain_x0: self.constrain_x0,
        })
    }

    fn from_spec(s: &GameSpec) -> Self {
        let list = |v: &[DMatrix<f64>]| v.iter().map(mat_to_rows).collect();
        Self {
            A: mat_to_rows(&s.a),
            B: list(&s.b),
            Q: list(&s.q),
            R: list(&s.r),
            stage_D: mat_to_rows(&s.stage_d),
            d: s.d.iter().copied().collect(),
            stage_G: list(&s.stage_g),
            g: s.g.iter().copied().collect(),
            T: s.horizon,
            box_lo: s.x_box.lo.iter().copied().collect(),
            box_hi: s.x_box.hi.iter().copied().collect(),
            mode: s.mode,
            w: if s.drift.iter().all(|v| *v == 0.0) {
                None
            } else {
                Some(s.drift.iter().copied().collect())
            },
            constrain_x0: s.constrain_x0,
        }
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = 1.0 + inf_norm_mat(m);
    inf_norm_mat(&(m - m.transpose())) <= 1e-9 * scale
}

fn is_spd(m: &DMatrix<f64>) -> bool {
    is_symmetric(m) && m.nrows() > 0 && m.clone().cholesky().is_some() && min_sym_eig(m) > 0.0
}

/// Check every structural invariant of a game. An empty report means the
/// spec is usable.
pub fn validate_game(spec: &GameSpec) -> Vec<String> {
    let mut v = Vec::new();
    let n = spec.a.nrows();
    if n == 0 || spec.a.ncols() != n {
        v.push("dimension mismatch A (must be square and non-empty)".to_string());
    }
    let agents = spec.b.len();
    if agents == 0 {
        v.push("at least one agent is required".to_string());
    }
    if spec.q.len() != agents || spec.r.len() != agents || spec.stage_g.len() != agents {
        v.push(format!(
            "agent count mismatch: B has {agents}, Q has {}, R has {}, stage_G has {}",
            spec.q.len(),
            spec.r.len(),
            spec.stage_g.len()
        ));
    }
    for (i, b) in spec.b.iter().enumerate() {
        let k = i + 1;
        if b.nrows() != n || b.ncols() == 0 {
            v.push(format!("dimension mismatch B_{k}"));
        }
        if let Some(q) = spec.q.get(i) {
            if q.shape() != (n, n) {
                v.push(format!("dimension mismatch Q_{k}"));
            } else if !is_spd(q) {
                v.push(format!("Q_{k} not positive definite"));
            }
        }
        if let Some(r) = spec.r.get(i) {
            if r.shape() != (b.ncols(), b.ncols()) {
                v.push(format!("dimension mismatch R_{k}"));
            } else if !is_spd(r) {
                v.push(format!("R_{k} not positive definite"));
            }
        }
        if let Some(g) = spec.stage_g.get(i) {
            if g.ncols() != b.ncols() || g.nrows() != spec.g.len() {
                v.push(format!("dimension mismatch stage_G_{k}"));
            }
        }
    }
    if spec.stage_d.ncols() != n || spec.stage_d.nrows() != spec.d.len() {
        v.push("dimension mismatch stage_D".to_string());
    }
    if spec.horizon == 0 {
        v.push("horizon T must be at least 1".to_string());
    }
    if spec.x_box.lo.len() != n || spec.x_box.hi.len() != n {
        v.push("dimension mismatch box".to_string());
    } else if spec
        .x_box
        .lo
        .iter()
        .zip(spec.x_box.hi.iter())
        .any(|(l, h)| !(l.is_finite() && h.is_finite() && h > l))
    {
        v.push("box must have finite, strictly positive side lengths".to_string());
    }
    if spec.drift.len() != n {
        v.push("dimension mismatch w".to_string());
    }
    let finite = |m: &DMatrix<f64>| m.iter().all(|x| x.is_finite());
    if !finite(&spec.a)
        || !spec.b.iter().all(finite)
        || !finite(&spec.stage_d)
        || !spec.stage_g.iter().all(finite)
        || !spec.d.iter().chain(spec.g.iter()).chain(spec.drift.iter()).all(|x| x.is_finite())
    {
        v.push("non-finite entries".to_string());
    }
    v
}

/// Location of one agent's decision block inside the stacked input vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentBlock {
    pub offset: usize,
    pub m: usize,
    pub horizon: usize,
}

impl AgentBlock {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.m * self.horizon
    }

    /// Indices of `u_i^t` in the stacked vector.
    pub fn stage(&self, t: usize) -> Range<usize> {
        let s = self.offset + t * self.m;
        s..s + self.m
    }
}

/// The parametric AVI `0 ∈ Hu + F x⁰ + f + N_{U(x⁰)}(u)` with
/// `U(x⁰) = {u : C u + D x⁰ ≤ c}`, plus the data needed to evaluate the
/// agents' costs.
#[derive(Debug, Clone)]
pub struct CondensedAvi {
    pub h: DMatrix<f64>,
    pub f_x: DMatrix<f64>,
    pub f: DVector<f64>,
    pub c_u: DMatrix<f64>,
    pub d_x: DMatrix<f64>,
    pub c: DVector<f64>,
    pub agents: Vec<AgentBlock>,
    pub n: usize,
    pub horizon: usize,
    pub x_box: ParamBox,
    /// Extra halfspaces restricting the parameter set (usually empty).
    pub param_cuts: Polyhedron,
    pub prediction: Prediction,
}

/// Affine prediction `x = Θ x⁰ + Γ u + drift_path` and the stacked weights.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub theta: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub drift_path: DVector<f64>,
    pub q_bar: Vec<DMatrix<f64>>,
    pub r_bar: Vec<DMatrix<f64>>,
}

impl CondensedAvi {
    pub fn n_inputs(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_constraints(&self) -> usize {
        self.c_u.nrows()
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// `𝓕(u, x⁰) = H u + F x⁰ + f`.
    pub fn pseudo_gradient(&self, u: &DVector<f64>, x0: &DVector<f64>) -> DVector<f64> {
        &self.h * u + &self.f_x * x0 + &self.f
    }

    /// `U(x⁰)` as a polyhedron in `u`.
    pub fn feasible_inputs(&self, x0: &DVector<f64>) -> Polyhedron {
        Polyhedron::new(self.c_u.clone(), &self.c - &self.d_x * x0)
    }

    /// Box plus parameter cuts, as a polyhedron in `x`.
    pub fn parameter_set(&self) -> Polyhedron {
        self.x_box.to_polyhedron().stack(&self.param_cuts)
    }

    /// Joint polyhedron `{(x, u) : C u + D x ≤ c, x ∈ X}` with `x` first.
    pub fn joint_polyhedron(&self) -> Polyhedron {
        let n = self.n;
        let nu = self.n_inputs();
        let p = self.n_constraints();
        let px = self.parameter_set();
        let k = px.n_rows();
        let mut a = DMatrix::zeros(p + k, n + nu);
        a.view_mut((0, 0), (p, n)).copy_from(&self.d_x);
        a.view_mut((0, n), (p, nu)).copy_from(&self.c_u);
        a.view_mut((p, 0), (k, n)).copy_from(&px.a);
        let mut b = DVector::zeros(p + k);
        b.rows_mut(0, p).copy_from(&self.c);
        b.rows_mut(p, k).copy_from(&px.b);
        Polyhedron::new(a, b)
    }

    pub fn predict(&self, u: &DVector<f64>, x0: &DVector<f64>) -> DVector<f64> {
        let p = &self.prediction;
        &p.theta * x0 + &p.gamma * u + &p.drift_path
    }

    /// Agent `i`'s cost `½ xᵀ Q̄_i x + ½ u_iᵀ R̄_i u_i` with `x` predicted from
    /// `(u, x⁰)`.
    pub fn agent_cost(&self, i: usize, u: &DVector<f64>, x0: &DVector<f64>) -> f64 {
        let x = self.predict(u, x0);
        let ui = u.rows_range(self.agents[i].range()).into_owned();
        0.5 * x.dot(&(&self.prediction.q_bar[i] * &x))
            + 0.5 * ui.dot(&(&self.prediction.r_bar[i] * &ui))
    }

    /// The compact local objective
    /// `½‖u_i‖²_{H_ii} + u_iᵀ(F_i x⁰ + f_i) + ½‖x⁰‖²_{Z_i} + Σ_{j≠i} u_iᵀ H_ij u_j`.
    ///
    /// Differs from [`Self::agent_cost`] only by terms that do not depend on
    /// `u_i`.
    pub fn local_objective(&self, i: usize, u: &DVector<f64>, x0: &DVector<f64>) -> f64 {
        let ri = self.agents[i].range();
        let ui = u.rows_range(ri.clone()).into_owned();
        let hi = self.h.rows_range(ri.clone());
        let mut val = 0.0;
        for (j, blk) in self.agents.iter().enumerate() {
            let uj = u.rows_range(blk.range());
            let hij = hi.columns_range(blk.range());
            let w = if i == j { 0.5 } else { 1.0 };
            val += w * ui.dot(&(hij * uj));
        }
        let fi = self.f_x.rows_range(ri.clone());
        val += ui.dot(&(fi * x0)) + ui.dot(&self.f.rows_range(ri));
        let th = &self.prediction.theta;
        let z = th.transpose() * &self.prediction.q_bar[i] * th;
        val + 0.5 * x0.dot(&(z * x0))
    }

    /// Digest of the problem data, used as map provenance.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for m in [&self.h, &self.f_x, &self.c_u, &self.d_x, &self.param_cuts.a] {
            hasher.update((m.nrows() as u64).to_le_bytes());
            hasher.update((m.ncols() as u64).to_le_bytes());
            for row in m.row_iter() {
                for v in row.iter() {
                    hasher.update(v.to_le_bytes());
                }
            }
        }
        for v in [&self.f, &self.c, &self.x_box.lo, &self.x_box.hi, &self.param_cuts.b] {
            hasher.update((v.len() as u64).to_le_bytes());
            for x in v.iter() {
                hasher.update(x.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// Condense a finite-horizon game.
pub fn condense(spec: &GameSpec) -> Result<CondensedAvi> {
    let report = validate_game(spec);
    if !report.is_empty() {
        return Err(Error::InvalidGame(report));
    }
    let q_bar = spec
        .q
        .iter()
        .map(|q| kron_eye(spec.horizon, q))
        .collect();
    condense_with_weights(spec, q_bar)
}

/// Condense the infinite-horizon variant: the terminal block of each `Q̄_i`
/// carries `S_i + P_i`.
pub fn condense_infinite_horizon(spec: &GameSpec, ti: &TerminalIngredients) -> Result<CondensedAvi> {
    let report = validate_game(spec);
    if !report.is_empty() {
        return Err(Error::InvalidGame(report));
    }
    let n = spec.n();
    let t = spec.horizon;
    if ti.p.len() != spec.n_agents() || ti.s.len() != spec.n_agents() {
        return Err(Error::Dimension("terminal ingredients agent count".into()));
    }
    let q_bar = spec
        .q
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let mut qb = kron_eye(t, q);
            let term = &ti.s[i] + &ti.p[i];
            let asym = inf_norm_mat(&(&term - term.transpose()));
            if asym > 1e-8 {
                log::warn!("terminal weight of agent {} is asymmetric ({asym:.2e})", i + 1);
            }
            qb.view_mut(((t - 1) * n, (t - 1) * n), (n, n)).copy_from(&term);
            qb
        })
        .collect();
    condense_with_weights(spec, q_bar)
}

/// Condense according to `spec.mode`, computing terminal ingredients when
/// needed.
pub fn condense_auto(spec: &GameSpec) -> Result<CondensedAvi> {
    match spec.mode {
        Mode::FiniteHorizon => condense(spec),
        Mode::InfiniteHorizon => {
            let ti = crate::riccati::solve_coupled_riccati(spec)?;
            condense_infinite_horizon(spec, &ti)
        }
    }
}

fn condense_with_weights(spec: &GameSpec, q_bar: Vec<DMatrix<f64>>) -> Result<CondensedAvi> {
    let n = spec.n();
    let t = spec.horizon;
    let dims = spec.input_dims();
    let nu: usize = dims.iter().map(|m| m * t).sum();

    let mut agents = Vec::with_capacity(dims.len());
    let mut off = 0;
    for &m in &dims {
        agents.push(AgentBlock { offset: off, m, horizon: t });
        off += m * t;
    }

    // powers[k] = A^k
    let mut powers = vec![DMatrix::identity(n, n)];
    for k in 1..=t {
        let next = &spec.a * &powers[k - 1];
        powers.push(next);
    }
    let mut theta = DMatrix::zeros(t * n, n);
    for k in 0..t {
        theta.view_mut((k * n, 0), (n, n)).copy_from(&powers[k + 1]);
    }
    // x^{k+1} = A^{k+1} x⁰ + Σ_{s≤k} A^{k-s} B u^s + Σ_{s≤k} A^s w
    let mut gamma = DMatrix::zeros(t * n, nu);
    for (i, b) in spec.b.iter().enumerate() {
        let blk = agents[i];
        for k in 0..t {
            for s in 0..=k {
                let col = blk.stage(s).start;
                gamma
                    .view_mut((k * n, col), (n, blk.m))
                    .copy_from(&(&powers[k - s] * b));
            }
        }
    }
    let mut drift_path = DVector::zeros(t * n);
    let mut acc = DVector::zeros(n);
    for k in 0..t {
        acc = &spec.a * acc + &spec.drift;
        drift_path.rows_mut(k * n, n).copy_from(&acc);
    }

    let r_bar: Vec<DMatrix<f64>> = spec.r.iter().map(|r| kron_eye(t, r)).collect();

    let mut h = DMatrix::zeros(nu, nu);
    let mut f_x = DMatrix::zeros(nu, n);
    let mut f = DVector::zeros(nu);
    for (i, blk) in agents.iter().enumerate() {
        let gi = gamma.columns_range(blk.range());
        let gtq = gi.transpose() * &q_bar[i];
        let mut rows = &gtq * &gamma;
        let mut diag = rows.view_mut((0, blk.offset), (blk.m * t, blk.m * t));
        diag += &r_bar[i];
        h.rows_range_mut(blk.range()).copy_from(&rows);
        f_x.rows_range_mut(blk.range()).copy_from(&(&gtq * &theta));
        f.rows_range_mut(blk.range()).copy_from(&(&gtq * &drift_path));
    }

    let min_eig = min_sym_eig(&h);
    if !(min_eig > 1e-12 * (1.0 + inf_norm_mat(&h))) {
        return Err(Error::AssumptionViolated { min_eig });
    }

    let rx = spec.stage_d.nrows();
    let ru = spec.g.len();
    let p = t * (rx + ru);
    let big_d = kron_eye(t, &spec.stage_d);
    let mut c_u = DMatrix::zeros(p, nu);
    let mut d_x = DMatrix::zeros(p, n);
    let mut c = DVector::zeros(p);
    if rx > 0 {
        c_u.rows_mut(0, t * rx).copy_from(&(&big_d * &gamma));
        d_x.rows_mut(0, t * rx).copy_from(&(&big_d * &theta));
        c.rows_mut(0, t * rx)
            .copy_from(&(repeat_vec(t, &spec.d) - &big_d * &drift_path));
    }
    if ru > 0 {
        for (i, g) in spec.stage_g.iter().enumerate() {
            let blk = agents[i];
            for k in 0..t {
                c_u.view_mut((t * rx + k * ru, blk.stage(k).start), (ru, blk.m))
                    .copy_from(g);
            }
        }
        c.rows_mut(t * rx, t * ru).copy_from(&repeat_vec(t, &spec.g));
    }

    let param_cuts = if spec.constrain_x0 {
        Polyhedron::new(spec.stage_d.clone(), spec.d.clone())
    } else {
        Polyhedron::new(DMatrix::zeros(0, n), DVector::zeros(0))
    };

    Ok(CondensedAvi {
        h,
        f_x,
        f,
        c_u,
        d_x,
        c,
        agents,
        n,
        horizon: t,
        x_box: spec.x_box.clone(),
        param_cuts,
        prediction: Prediction {
            theta,
            gamma,
            drift_path,
            q_bar,
            r_bar,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64, q: f64, r: f64, t: usize) -> GameSpec {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        GameSpec::unconstrained(m(a), vec![m(b)], vec![m(q)], vec![m(r)], t, ParamBox::cube(1, 1.0))
    }

    #[test]
    fn scalar_spec_is_valid() {
        assert!(validate_game(&scalar(1.0, 1.0, 1.0, 1.0, 1)).is_empty());
    }

    #[test]
    fn zero_input_weight_is_reported() {
        let report = validate_game(&scalar(1.0, 1.0, 1.0, 0.0, 1));
        assert_eq!(report, vec!["R_1 not positive definite".to_string()]);
    }

    #[test]
    fn wrong_b_rows_are_reported() {
        let mut s = scalar(1.0, 1.0, 1.0, 1.0, 1);
        s.b[0] = DMatrix::from_element(2, 1, 1.0);
        assert!(validate_game(&s).contains(&"dimension mismatch B_1".to_string()));
    }

    #[test]
    fn flat_box_is_reported() {
        let mut s = scalar(1.0, 1.0, 1.0, 1.0, 1);
        s.x_box = ParamBox::new(vec![0.0], vec![0.0]);
        assert_eq!(validate_game(&s).len(), 1);
    }

    #[test]
    fn scalar_condensation() {
        let avi = condense(&scalar(1.0, 1.0, 1.0, 1.0, 1)).unwrap();
        assert_eq!(avi.h[(0, 0)], 2.0);
        assert_eq!(avi.f_x[(0, 0)], 1.0);
        assert_eq!(avi.f[0], 0.0);
        let th = &avi.prediction.theta;
        let z = th.transpose() * &avi.prediction.q_bar[0] * th;
        assert_eq!(z[(0, 0)], 1.0);
        assert_eq!(avi.n_constraints(), 0);
    }

    #[test]
    fn zero_dynamics_kill_f() {
        let avi = condense(&scalar(0.0, 1.0, 1.0, 1.0, 1)).unwrap();
        assert_eq!(avi.f_x[(0, 0)], 0.0);
    }

    #[test]
    fn constraint_count_matches_stage_rows() {
        let mut s = scalar(1.0, 1.0, 1.0, 1.0, 3);
        s.stage_d = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        s.d = DVector::from_vec(vec![2.0, 2.0]);
        s.stage_g = vec![DMatrix::from_row_slice(1, 1, &[1.0])];
        s.g = DVector::from_vec(vec![0.5]);
        let avi = condense(&s).unwrap();
        assert_eq!(avi.n_constraints(), 3 * (2 + 1));
    }

    #[test]
    fn json_roundtrip() {
        let mut s = scalar(1.0, 1.0, 1.0, 1.0, 2);
        s.stage_g = vec![DMatrix::from_row_slice(2, 1, &[1.0, -1.0])];
        s.g = DVector::from_vec(vec![1.0, 1.0]);
        let back = GameSpec::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back.stage_g, s.stage_g);
        assert_eq!(back.stage_d.shape(), (0, 1));
        assert!(validate_game(&back).is_empty());
    }
}
