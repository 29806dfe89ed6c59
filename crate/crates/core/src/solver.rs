//! Online solution of the AVI at a single parameter by projected
//! forward-backward splitting.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::avi::{kkt_residual, solve_kkt_active, ActiveSet};
use crate::error::{Error, Result};
use crate::game::CondensedAvi;
use crate::linalg::{inf_norm_vec, lstsq, min_sym_eig, rows_independent, select_rows, spectral_norm, sym_part};
use crate::polyhedra::Polyhedron;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Plain Euclidean steps with `γ = θ μ / L²`.
    Euclidean,
    /// Steps in the metric of `sym(H)`, where the scaled operator has unit
    /// monotonicity modulus.
    Preconditioned,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Target on the natural residual `‖u − Π_U(u − 𝓕(u))‖_∞`.
    pub tol_residual: f64,
    pub max_iters: usize,
    /// Wall-clock cap, checked together with the residual.
    pub budget_seconds: Option<f64>,
    /// Fixed step in the chosen metric; `None` picks `θ μ / L²`.
    pub step_size: Option<f64>,
    pub metric: Metric,
    /// `θ` in the automatic step.
    pub step_fraction: f64,
    /// Slack below which a constraint counts as active.
    pub act_tol: f64,
    /// Finish with an exact KKT solve on the identified active set.
    pub polish: bool,
    /// Iterations between exact residual checks.
    pub check_every: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_residual: 1e-9,
            max_iters: 20_000,
            budget_seconds: None,
            step_size: None,
            metric: Metric::Preconditioned,
            step_fraction: 0.9,
            act_tol: 1e-7,
            polish: true,
            check_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct AviSolution {
    pub u: DVector<f64>,
    /// Multiplier estimate over all `p` rows.
    pub lambda: DVector<f64>,
    pub active_set: ActiveSet,
    pub residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// `‖u − Π_{U(x⁰)}(u − 𝓕(u, x⁰))‖_∞`.
pub fn natural_residual(avi: &CondensedAvi, u: &DVector<f64>, x0: &DVector<f64>) -> Result<f64> {
    let set = avi.feasible_inputs(x0);
    let step = u - avi.pseudo_gradient(u, x0);
    Ok(inf_norm_vec(&(u - set.project(&step)?)))
}

/// Rows whose slack at `u` is at most `act_tol`.
pub fn slack_active_set(avi: &CondensedAvi, u: &DVector<f64>, x0: &DVector<f64>, act_tol: f64) -> ActiveSet {
    let slack = &avi.c - &avi.d_x * x0 - &avi.c_u * u;
    ActiveSet::new(
        (0..slack.len())
            .filter(|&i| slack[i] <= act_tol)
            .collect(),
    )
}

/// Least-squares multipliers on `set` from stationarity, clipped at zero and
/// padded to all rows.
pub fn estimate_multipliers(avi: &CondensedAvi, u: &DVector<f64>, x0: &DVector<f64>, set: &ActiveSet) -> DVector<f64> {
    let p = avi.n_constraints();
    let mut lam = DVector::zeros(p);
    if set.is_empty() {
        return lam;
    }
    let ca_t = select_rows(&avi.c_u, set.indices()).transpose();
    let g = -avi.pseudo_gradient(u, x0);
    if let Ok((sol, _)) = lstsq(&ca_t, &DMatrix::from_column_slice(g.len(), 1, g.as_slice())) {
        for (k, &i) in set.indices().iter().enumerate() {
            lam[i] = sol[(k, 0)].max(0.0);
        }
    }
    lam
}

struct Scaled {
    /// `u = t w`
    t: DMatrix<f64>,
    /// `g(w) = hw w + gx`, with `gx` depending on the parameter
    hw: DMatrix<f64>,
    left: DMatrix<f64>,
    set: Polyhedron,
    step: f64,
}

fn scaled_problem(avi: &CondensedAvi, x0: &DVector<f64>, settings: &SolverSettings) -> Result<Scaled> {
    let nu = avi.n_inputs();
    let rhs = &avi.c - &avi.d_x * x0;
    let chol = match settings.metric {
        Metric::Preconditioned => sym_part(&avi.h).cholesky(),
        Metric::Euclidean => None,
    };
    if let Some(chol) = chol {
        let l = chol.l();
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("singular metric factor".into()))?;
        let t = l_inv.transpose();
        let hw = &l_inv * &avi.h * &t;
        let lip = spectral_norm(&hw);
        let mu = min_sym_eig(&hw).max(f64::MIN_POSITIVE);
        Ok(Scaled {
            set: Polyhedron::new(&avi.c_u * &t, rhs),
            step: settings.step_fraction * mu / (lip * lip),
            t,
            hw,
            left: l_inv,
        })
    } else {
        let mu = min_sym_eig(&avi.h);
        if mu <= 0.0 {
            return Err(Error::AssumptionViolated { min_eig: mu });
        }
        let lip = spectral_norm(&avi.h);
        Ok(Scaled {
            t: DMatrix::identity(nu, nu),
            hw: avi.h.clone(),
            left: DMatrix::identity(nu, nu),
            set: Polyhedron::new(avi.c_u.clone(), rhs),
            step: settings.step_fraction * mu / (lip * lip),
        })
    }
}

/// Try an exact KKT solve on the active set identified at `u`.
fn polish(avi: &CondensedAvi, u: &DVector<f64>, x0: &DVector<f64>, act_tol: f64) -> Option<(DVector<f64>, DVector<f64>, ActiveSet)> {
    let set = slack_active_set(avi, u, x0, act_tol);
    if !rows_independent(&avi.c_u, set.indices()) {
        return None;
    }
    let maps = solve_kkt_active(avi, &set).ok()?;
    let uu = &maps.ku * x0 + &maps.ku0;
    let la = &maps.kl * x0 + &maps.kl0;
    if la.iter().any(|v| *v < -1e-12) {
        return None;
    }
    let mut lam = DVector::zeros(avi.n_constraints());
    for (k, &i) in set.indices().iter().enumerate() {
        lam[i] = la[k].max(0.0);
    }
    Some((uu, lam, set))
}

/// Solve the AVI at `x0`. The returned iterate has the smallest natural
/// residual seen; `status` tells whether it met the tolerance.
pub fn solve_avi(
    avi: &CondensedAvi,
    x0: &DVector<f64>,
    settings: &SolverSettings,
    warm_start: Option<&DVector<f64>>,
) -> Result<AviSolution> {
    if x0.len() != avi.n {
        return Err(Error::Dimension(format!("parameter has {} entries, expected {}", x0.len(), avi.n)));
    }
    let nu = avi.n_inputs();
    let u_set = avi.feasible_inputs(x0);
    if u_set.feasibility()?.is_empty() {
        return Err(Error::Infeasible);
    }
    let start_time = Instant::now();
    let mut sc = scaled_problem(avi, x0, settings)?;
    if let Some(step) = settings.step_size {
        if !(step > 0.0) {
            return Err(Error::Dimension("step size must be positive".into()));
        }
        sc.step = step;
    }
    let q = &sc.left * (&avi.f_x * x0 + &avi.f);
    let start = match warm_start {
        Some(w) if w.len() == nu => w.clone(),
        _ => DVector::zeros(nu),
    };
    // w = Lᵀ u, so start from the scaled warm start
    let t_inv = sc
        .t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("singular metric factor".into()))?;
    let mut w = sc.set.project(&(&t_inv * start))?;

    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut iters = 0;
    let check = settings.check_every.max(1);
    let finish = |u: DVector<f64>, lambda: Option<(DVector<f64>, ActiveSet)>, res: f64, iters: usize, status| {
        let (lambda, active_set) = lambda.unwrap_or_else(|| {
            let set = slack_active_set(avi, &u, x0, settings.act_tol);
            (estimate_multipliers(avi, &u, x0, &set), set)
        });
        AviSolution { u, lambda, active_set, residual: res, iterations: iters, status }
    };

    loop {
        if iters % check == 0 || iters >= settings.max_iters {
            let u = &sc.t * &w;
            let res = natural_residual(avi, &u, x0)?;
            if best.as_ref().is_none_or(|(r, _)| res < *r) {
                best = Some((res, u.clone()));
            }
            if res <= settings.tol_residual {
                return Ok(finish(u, None, res, iters, SolveStatus::Converged));
            }
            if settings.polish {
                if let Some((up, lam, set)) = polish(avi, &u, x0, settings.act_tol) {
                    if let Ok(rp) = natural_residual(avi, &up, x0) {
                        if rp <= settings.tol_residual && kkt_residual(avi, &up, &lam, x0) <= settings.tol_residual.max(1e-9) * 10.0 {
                            return Ok(finish(up, Some((lam, set)), rp, iters, SolveStatus::Converged));
                        }
                    }
                }
            }
            let out_of_time = settings
                .budget_seconds
                .is_some_and(|b| start_time.elapsed().as_secs_f64() >= b);
            if iters >= settings.max_iters || out_of_time {
                let (res, u) = best.expect("at least one check");
                return Ok(finish(u, None, res, iters, SolveStatus::BudgetExhausted));
            }
        }
        let g = &sc.hw * &w + &q;
        w = sc.set.project(&(&w - g * sc.step))?;
        iters += 1;
    }
}
