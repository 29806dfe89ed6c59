//! Hand-built problem instances shared by unit tests.

use nalgebra::{DMatrix, DVector};

use crate::game::{AgentBlock, CondensedAvi, GameSpec, ParamBox, Prediction};
use crate::polyhedra::Polyhedron;

/// Hand-built AVI with given data and a box of half-width 1.
pub fn toy(h: &[f64], nu: usize, fx: &[f64], n: usize, c: &[f64], d: &[f64], rhs: &[f64]) -> CondensedAvi {
    let p = rhs.len();
    CondensedAvi {
        h: DMatrix::from_row_slice(nu, nu, h),
        f_x: DMatrix::from_row_slice(nu, n, fx),
        f: DVector::zeros(nu),
        c_u: DMatrix::from_row_slice(p, nu, c),
        d_x: DMatrix::from_row_slice(p, n, d),
        c: DVector::from_row_slice(rhs),
        agents: vec![AgentBlock { offset: 0, m: nu, horizon: 1 }],
        n,
        horizon: 1,
        x_box: ParamBox::cube(n, 1.0),
        param_cuts: Polyhedron::whole_space(n),
        prediction: Prediction {
            theta: DMatrix::zeros(0, n),
            gamma: DMatrix::zeros(0, nu),
            drift_path: DVector::zeros(0),
            q_bar: vec![DMatrix::zeros(0, 0)],
            r_bar: vec![DMatrix::zeros(nu, nu)],
        },
    }
}


/// Two agents pushing a double integrator, each with `|u_i| ≤ umax`.
pub fn double_integrator(horizon: usize, umax: f64) -> GameSpec {
    let mut spec = GameSpec::unconstrained(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
        vec![
            DMatrix::from_row_slice(2, 1, &[0.005, 0.1]),
            DMatrix::from_row_slice(2, 1, &[0.0, 0.05]),
        ],
        vec![DMatrix::identity(2, 2), DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5])],
        vec![DMatrix::from_element(1, 1, 0.1), DMatrix::from_element(1, 1, 0.2)],
        horizon,
        ParamBox::cube(2, 2.0),
    );
    spec.stage_g = vec![
        DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(4, 1, &[0.0, 0.0, 1.0, -1.0]),
    ];
    spec.g = DVector::from_element(4, umax);
    spec
}

/// Four constraints in the plane whose rows sum pairwise to the same row:
/// `{0,1}` and `{2,3}` have one-dimensional regions on `x₁ = x₂`.
pub fn diamond() -> CondensedAvi {
    let mut avi = toy(
        &[1.0, 0.0, 0.0, 1.0],
        2,
        &[0.0; 4],
        2,
        &[1.0, 0.0, 0.0, 1.0, 2.0, -1.0, -1.0, 2.0],
        &[-1.0, 0.0, 0.0, -1.0, -1.0, 0.0, 0.0, -1.0],
        &[0.0; 4],
    );
    avi.f = DVector::from_element(2, -10.0);
    avi.x_box = ParamBox::cube(2, 1.5);
    avi
}
