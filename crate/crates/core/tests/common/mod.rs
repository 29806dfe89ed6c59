//! Oracles and fixtures shared by the integration tests. Everything here is
//! computed from the raw game data, never from the condensed matrices.

#![allow(dead_code)]

use lqgame::polyhedra::Polyhedron;
use lqgame::{GameSpec, ParamBox};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Per-stage inputs `inputs[t][i]` from the stacked vector
/// `u = col_i(col_t u_i^t)`.
pub fn split_inputs(spec: &GameSpec, u: &DVector<f64>) -> Vec<Vec<DVector<f64>>> {
    let dims = spec.input_dims();
    let t_max = spec.horizon;
    let mut offsets = Vec::new();
    let mut off = 0;
    for m in &dims {
        offsets.push(off);
        off += m * t_max;
    }
    (0..t_max)
        .map(|t| {
            dims.iter()
                .zip(&offsets)
                .map(|(&m, &o)| u.rows(o + t * m, m).into_owned())
                .collect()
        })
        .collect()
}

/// States `x⁰, x¹, …, x^T` by forward simulation.
pub fn rollout(spec: &GameSpec, x0: &DVector<f64>, u: &DVector<f64>) -> Vec<DVector<f64>> {
    let inputs = split_inputs(spec, u);
    let mut xs = vec![x0.clone()];
    for stage in &inputs {
        let mut next = &spec.a * xs.last().unwrap() + &spec.drift;
        for (b, ui) in spec.b.iter().zip(stage) {
            next += b * ui;
        }
        xs.push(next);
    }
    xs
}

/// `½ Σ_{t=1}^{T} ‖x^t‖²_{Q_i} + ½ Σ_{t=0}^{T−1} ‖u_i^t‖²_{R_i}`.
pub fn rollout_cost(spec: &GameSpec, x0: &DVector<f64>, u: &DVector<f64>, i: usize) -> f64 {
    let xs = rollout(spec, x0, u);
    let inputs = split_inputs(spec, u);
    let mut j = 0.0;
    for t in 0..spec.horizon {
        let x = &xs[t + 1];
        j += 0.5 * x.dot(&(&spec.q[i] * x));
        let ui = &inputs[t][i];
        j += 0.5 * ui.dot(&(&spec.r[i] * ui));
    }
    j
}

/// Stage-constraint values `D x^t − d` for `t = 1..T`, then
/// `Σ_i G_i u_i^t − g` for `t = 0..T−1`; feasible iff all are `≤ 0`.
pub fn rollout_constraints(spec: &GameSpec, x0: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let xs = rollout(spec, x0, u);
    let inputs = split_inputs(spec, u);
    let mut out = Vec::new();
    for x in xs.iter().skip(1) {
        out.extend((&spec.stage_d * x - &spec.d).iter().copied());
    }
    if !spec.g.is_empty() {
        for stage in &inputs {
            let mut v = -spec.g.clone();
            for (g, ui) in spec.stage_g.iter().zip(stage) {
                v += g * ui;
            }
            out.extend(v.iter().copied());
        }
    }
    DVector::from_vec(out)
}

/// Gradient of agent `i`'s rollout cost with respect to its own stacked
/// inputs, by the backward costate recursion `p^T = Q x^T`,
/// `p^t = Q x^t + Aᵀ p^{t+1}`.
pub fn adjoint_gradient(spec: &GameSpec, x0: &DVector<f64>, u: &DVector<f64>, i: usize) -> DVector<f64> {
    let xs = rollout(spec, x0, u);
    let inputs = split_inputs(spec, u);
    let t_max = spec.horizon;
    let m = spec.b[i].ncols();
    let mut grad = DVector::zeros(m * t_max);
    let mut costate = DVector::zeros(spec.n());
    for t in (1..=t_max).rev() {
        costate = &spec.q[i] * &xs[t] + spec.a.transpose() * &costate;
        let s = t - 1;
        let g = spec.b[i].transpose() * &costate + &spec.r[i] * &inputs[s][i];
        grad.rows_mut(s * m, m).copy_from(&g);
    }
    grad
}

/// The twenty games of the main agreement checks: `n_x ∈ {2,3,4}`,
/// `T ∈ {2,…,5}`, two scalar-input agents, parameter box `[−1.5, 1.5]^{n_x}`.
pub fn agreement_games() -> Vec<GameSpec> {
    (0..20u64)
        .map(|i| {
            let nx = 2 + (i % 3) as usize;
            let t = 2 + ((i / 3) % 4) as usize;
            let mut spec = lqgame::random_game(nx, t, 2, 1000 + i).expect("generator");
            spec.x_box = ParamBox::cube(nx, 1.5);
            spec
        })
        .collect()
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..=scale))
}

/// Points of a polyhedron: the witness, then random points on chords
/// through it, kept strictly inside by a margin fraction.
pub fn interior_samples(region: &Polyhedron, witness: &DVector<f64>, count: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let n = witness.len();
    let mut out = vec![witness.clone()];
    let slack = &region.b - &region.a * witness;
    while out.len() < count {
        let dir = random_vector(rng, n, 1.0);
        let ad = &region.a * &dir;
        let mut t_max = f64::INFINITY;
        for k in 0..ad.len() {
            if ad[k] > 1e-14 {
                t_max = t_max.min(slack[k].max(0.0) / ad[k]);
            }
        }
        if !t_max.is_finite() {
            t_max = 1.0;
        }
        let s = rng.random_range(0.0..0.9) * t_max;
        out.push(witness + dir * s);
    }
    out
}

/// `per_axis` evenly spaced values per coordinate, endpoints included.
pub fn grid(bx: &ParamBox, per_axis: usize) -> Vec<DVector<f64>> {
    let n = bx.dim();
    let total = per_axis.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            DVector::from_fn(n, |k, _| {
                let j = idx % per_axis;
                idx /= per_axis;
                bx.lo[k] + (bx.hi[k] - bx.lo[k]) * j as f64 / (per_axis - 1) as f64
            })
        })
        .collect()
}

/// Closed form of an active set's maps from the Schur complement
/// `M = C_A H⁻¹ C_Aᵀ`, independent of the bordered factorization.
pub fn schur_maps(
    h: &DMatrix<f64>,
    f_x: &DMatrix<f64>,
    f: &DVector<f64>,
    ca: &DMatrix<f64>,
    da: &DMatrix<f64>,
    c_a: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let hinv = h.clone().try_inverse().expect("H invertible");
    let m = ca * &hinv * ca.transpose();
    let minv = m.try_inverse().expect("independent rows");
    // λ = −M⁻¹ (C_A H⁻¹ (F x + f) − D_A x + c_A)
    let kl = -&minv * (ca * &hinv * f_x - da);
    let kl0 = -&minv * (ca * &hinv * f + c_a);
    // u = −H⁻¹ (F x + f + C_Aᵀ λ)
    let ku = -&hinv * (f_x + ca.transpose() * &kl);
    let ku0 = -&hinv * (f + ca.transpose() * &kl0);
    (ku, ku0, kl, kl0)
}
