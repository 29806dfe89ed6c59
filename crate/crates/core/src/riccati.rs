//! Terminal ingredients of the infinite-horizon game: per-agent Riccati
//! solutions and the coupled open-loop equations.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::game::{validate_game, GameSpec};
use crate::linalg::{inf_norm_mat, spectral_radius};

const DARE_STEP_TOL: f64 = 1e-12;
const DARE_MAX_ITERS: usize = 100_000;
const DARE_RESIDUAL_TOL: f64 = 1e-10;

const COUPLED_STEP_TOL: f64 = 1e-10;
const COUPLED_MAX_SWEEPS: usize = 10_000;
const COUPLED_RESIDUAL_TOL: f64 = 1e-8;

/// Per-agent terminal data; `s[i] = x_mats[i] - p[i]`.
#[derive(Debug, Clone)]
pub struct TerminalIngredients {
    pub p: Vec<DMatrix<f64>>,
    pub x_mats: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
    pub s: Vec<DMatrix<f64>>,
}

fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure(format!("singular {what}")))
}

fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let pa = p * a;
    let btpa = b.transpose() * &pa;
    let s = r + b.transpose() * p * b;
    let gain = inverse(&s, "R + BᵀPB")? * &btpa;
    Ok(q + a.transpose() * &pa - btpa.transpose() * gain)
}

/// `‖P − (Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA)‖_∞` (entrywise max).
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    match riccati_map(a, b, q, r, p) {
        Ok(rhs) => inf_norm_mat(&(p - rhs)),
        Err(_) => f64::INFINITY,
    }
}

/// Solve the discrete algebraic Riccati equation by fixed-point iteration of
/// the Riccati recursion started at `P = Q`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut p = q.clone();
    for _ in 0..DARE_MAX_ITERS {
        let next = riccati_map(a, b, q, r, &p)?;
        let next = (&next + next.transpose()) * 0.5;
        let step = inf_norm_mat(&(&next - &p));
        p = next;
        if !step.is_finite() {
            break;
        }
        if step <= DARE_STEP_TOL * (1.0 + inf_norm_mat(&p)) {
            let res = dare_residual(a, b, q, r, &p);
            if res <= DARE_RESIDUAL_TOL {
                return Ok(p);
            }
        }
    }
    Err(Error::NoConvergence {
        what: "DARE fixed-point iteration",
        iters: DARE_MAX_ITERS,
        residual: dare_residual(a, b, q, r, &p),
    })
}

fn closed_loop(spec: &GameSpec, k: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut acl = spec.a.clone();
    for (b, ki) in spec.b.iter().zip(k) {
        acl += b * ki;
    }
    acl
}

/// Solve `X − Aᵀ X M = Q` for `X` through its Kronecker form.
fn solve_lyapunov_like(a: &DMatrix<f64>, m: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    // vec(AᵀXM) = (Mᵀ ⊗ Aᵀ) vec(X) with column-major vec
    let lhs = DMatrix::identity(n * n, n * n) - m.transpose().kronecker(&a.transpose());
    let rhs = nalgebra::DVector::from_column_slice(q.as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFailure("singular Lyapunov-type equation".into()))?;
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// Joint residual of the coupled equations
/// `X_i = Q_i + Aᵀ X_i A_cl`, `K_i = −R_i⁻¹ B_iᵀ X_i A_cl`,
/// with `A_cl = A + Σ_j B_j K_j`.
pub fn coupled_residual(spec: &GameSpec, x_mats: &[DMatrix<f64>], k: &[DMatrix<f64>]) -> f64 {
    let acl = closed_loop(spec, k);
    let mut res: f64 = 0.0;
    for i in 0..spec.n_agents() {
        let xa = &x_mats[i] * &acl;
        let line1 = &x_mats[i] - &spec.q[i] - spec.a.transpose() * &xa;
        let Some(rinv) = spec.r[i].clone().try_inverse() else {
            return f64::INFINITY;
        };
        let line2 = &k[i] + rinv * spec.b[i].transpose() * &xa;
        res = res.max(inf_norm_mat(&line1)).max(inf_norm_mat(&line2));
    }
    res
}

/// Coupled solution `(X_i, K_i)` per agent.
type CoupledPair = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

fn is_stabilizing(spec: &GameSpec, k: &[DMatrix<f64>]) -> bool {
    spectral_radius(&closed_loop(spec, k)) < 1.0
}

/// Gauss–Seidel sweeps: each `K_i` from line 2 holding the others fixed,
/// then each `X_i` from line 1 as a linear equation.
fn gauss_seidel(spec: &GameSpec, p: &[DMatrix<f64>], mut k: Vec<DMatrix<f64>>) -> Result<CoupledPair> {
    let a = &spec.a;
    let mut x_mats = p.to_vec();
    for _ in 0..COUPLED_MAX_SWEEPS {
        let mut step: f64 = 0.0;
        for i in 0..spec.n_agents() {
            let mut others = a.clone();
            for (j, (b, kj)) in spec.b.iter().zip(&k).enumerate() {
                if j != i {
                    others += b * kj;
                }
            }
            let bt = spec.b[i].transpose();
            let s = &spec.r[i] + &bt * &x_mats[i] * &spec.b[i];
            let ki = -(inverse(&s, "R + BᵀXB")? * &bt * &x_mats[i] * others);
            step = step.max(inf_norm_mat(&(&ki - &k[i])) / (1.0 + inf_norm_mat(&ki)));
            k[i] = ki;
        }
        let acl = closed_loop(spec, &k);
        for i in 0..spec.n_agents() {
            let xi = solve_lyapunov_like(a, &acl, &spec.q[i])?;
            step = step.max(inf_norm_mat(&(&xi - &x_mats[i])) / (1.0 + inf_norm_mat(&xi)));
            x_mats[i] = xi;
        }
        if !step.is_finite() {
            break;
        }
        if step <= COUPLED_STEP_TOL && coupled_residual(spec, &x_mats, &k) <= COUPLED_RESIDUAL_TOL {
            return Ok((x_mats, k));
        }
    }
    Err(Error::NoConvergence {
        what: "coupled Riccati sweeps",
        iters: COUPLED_MAX_SWEEPS,
        residual: coupled_residual(spec, &x_mats, &k),
    })
}

/// Backward recursion `X_i ← Q_i + Aᵀ X_i Λ⁻¹ A` with
/// `Λ = I + Σ_j B_j R_j⁻¹ B_jᵀ X_j`, started at `X_i = Q_i`.
fn backward_recursion(spec: &GameSpec) -> Result<CoupledPair> {
    let a = &spec.a;
    let n = spec.n();
    let s_mats = spec
        .b
        .iter()
        .zip(&spec.r)
        .map(|(b, r)| Ok(b * inverse(r, "R")? * b.transpose()))
        .collect::<Result<Vec<_>>>()?;
    let gains = |x_mats: &[DMatrix<f64>]| -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let mut lam = DMatrix::identity(n, n);
        for (s, x) in s_mats.iter().zip(x_mats) {
            lam += s * x;
        }
        let acl = inverse(&lam, "I + Σ S_j X_j")? * a;
        let k = (0..spec.n_agents())
            .map(|i| Ok(-(inverse(&spec.r[i], "R")? * spec.b[i].transpose() * &x_mats[i] * &acl)))
            .collect::<Result<Vec<_>>>()?;
        Ok((acl, k))
    };
    let mut x_mats = spec.q.clone();
    for _ in 0..DARE_MAX_ITERS {
        let (acl, _) = gains(&x_mats)?;
        let mut step: f64 = 0.0;
        for i in 0..spec.n_agents() {
            let next = &spec.q[i] + a.transpose() * &x_mats[i] * &acl;
            step = step.max(inf_norm_mat(&(&next - &x_mats[i])) / (1.0 + inf_norm_mat(&next)));
            x_mats[i] = next;
        }
        if !step.is_finite() {
            break;
        }
        if step <= DARE_STEP_TOL {
            let (_, k) = gains(&x_mats)?;
            if coupled_residual(spec, &x_mats, &k) <= COUPLED_RESIDUAL_TOL {
                return Ok((x_mats, k));
            }
        }
    }
    let k = gains(&x_mats).map(|g| g.1).unwrap_or_default();
    Err(Error::NoConvergence {
        what: "coupled Riccati recursion",
        iters: DARE_MAX_ITERS,
        residual: if k.is_empty() { f64::INFINITY } else { coupled_residual(spec, &x_mats, &k) },
    })
}

/// Solve the coupled equations by Gauss–Seidel sweeps initialised from the
/// agents' independent LQR gains. When the sweeps fail or return a
/// non-stabilizing closed loop, the backward recursion is tried and its
/// result preferred if it stabilizes.
pub fn solve_coupled_riccati(spec: &GameSpec) -> Result<TerminalIngredients> {
    let report = validate_game(spec);
    if !report.is_empty() {
        return Err(Error::InvalidGame(report));
    }
    let mut p = Vec::with_capacity(spec.n_agents());
    let mut k = Vec::with_capacity(spec.n_agents());
    for i in 0..spec.n_agents() {
        let pi = solve_dare(&spec.a, &spec.b[i], &spec.q[i], &spec.r[i])?;
        let bt = spec.b[i].transpose();
        let s = &spec.r[i] + &bt * &pi * &spec.b[i];
        k.push(-(inverse(&s, "R + BᵀPB")? * &bt * &pi * &spec.a));
        p.push(pi);
    }
    let finish = |(x_mats, k): CoupledPair| {
        for (i, x) in x_mats.iter().enumerate() {
            let asym = inf_norm_mat(&(x - x.transpose()));
            if asym > 1e-8 {
                log::warn!("X_{} is asymmetric by {asym:.2e}", i + 1);
            }
        }
        let s = x_mats.iter().zip(&p).map(|(x, p)| x - p).collect();
        TerminalIngredients { p: p.clone(), x_mats, k, s }
    };

    let sweeps = gauss_seidel(spec, &p, k);
    if let Ok((_, k)) = &sweeps {
        if is_stabilizing(spec, k) {
            return Ok(finish(sweeps?));
        }
    }
    match backward_recursion(spec) {
        Ok(sol) if is_stabilizing(spec, &sol.1) => Ok(finish(sol)),
        recursion => match sweeps {
            Ok(sol) => {
                log::warn!("coupled Riccati solution does not stabilize the closed loop");
                Ok(finish(sol))
            }
            Err(e) => recursion.map(finish).map_err(|_| e),
        },
    }
}
