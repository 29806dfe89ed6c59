mod common;

use common::*;
use lqgame::{condense, random_game, solve_kkt_active, ParamBox};
use nalgebra::DVector;
use proptest::prelude::*;

fn game(seed: u64, nx: usize, t: usize) -> lqgame::GameSpec {
    let mut spec = random_game(nx, t, 2, seed).unwrap();
    spec.x_box = ParamBox::cube(nx, 2.0);
    spec
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_and_gradient_match_rollout(
        seed in 0u64..500,
        nx in 1usize..5,
        t in 1usize..6,
        x in prop::collection::vec(-3.0f64..3.0, 4),
        u in prop::collection::vec(-2.0f64..2.0, 10),
    ) {
        let spec = game(seed, nx, t);
        let avi = condense(&spec).unwrap();
        let x0 = DVector::from_row_slice(&x[..nx]);
        let uu = DVector::from_row_slice(&u[..avi.n_inputs()]);
        for i in 0..2 {
            let j = rollout_cost(&spec, &x0, &uu, i);
            prop_assert!((j - avi.agent_cost(i, &uu, &x0)).abs() <= 1e-10 * j.abs().max(1.0));
            let g = adjoint_gradient(&spec, &x0, &uu, i);
            let gc = avi.pseudo_gradient(&uu, &x0).rows_range(avi.agents[i].range()).into_owned();
            prop_assert!((&g - &gc).amax() <= 1e-10 * g.amax().max(1.0));
        }
        let s = rollout_constraints(&spec, &x0, &uu);
        let sc = &avi.c_u * &uu + &avi.d_x * &x0 - &avi.c;
        prop_assert!((&s - &sc).amax() <= 1e-10 * (1.0 + avi.c.amax()));
    }

    #[test]
    fn local_objective_differs_from_cost_by_a_constant(
        seed in 0u64..500,
        a in prop::collection::vec(-2.0f64..2.0, 6),
        b in prop::collection::vec(-2.0f64..2.0, 6),
    ) {
        let spec = game(seed, 2, 3);
        let avi = condense(&spec).unwrap();
        let x0 = DVector::from_row_slice(&[0.3, -0.7]);
        let ua = DVector::from_row_slice(&a);
        // change only agent 0's inputs
        let mut ub = ua.clone();
        ub.rows_range_mut(avi.agents[0].range()).copy_from(&DVector::from_row_slice(&b[..3]));
        let da = avi.local_objective(0, &ua, &x0) - avi.agent_cost(0, &ua, &x0);
        let db = avi.local_objective(0, &ub, &x0) - avi.agent_cost(0, &ub, &x0);
        prop_assert!((da - db).abs() <= 1e-9 * (1.0 + da.abs()));
    }
}

#[test]
fn drift_enters_the_prediction() {
    let mut spec = game(7, 2, 3);
    spec.drift = DVector::from_row_slice(&[0.5, -0.25]);
    let avi = condense(&spec).unwrap();
    let x0 = DVector::from_row_slice(&[1.0, 1.0]);
    let u = DVector::from_element(avi.n_inputs(), 0.1);
    let xs = rollout(&spec, &x0, &u);
    let pred = avi.predict(&u, &x0);
    for t in 0..3 {
        assert!((pred.rows(2 * t, 2) - &xs[t + 1]).amax() < 1e-12);
    }
}

#[test]
fn active_set_maps_match_schur_complement_form() {
    let spec = game(11, 3, 3);
    let avi = condense(&spec).unwrap();
    let (map, _) = lqgame::explore(&avi, &lqgame::ExplorerConfig::default()).unwrap();
    assert!(map.len() > 3);
    for set in map.pieces.iter().map(|p| p.active_set.clone()) {
        let maps = solve_kkt_active(&avi, &set).unwrap();
        let idx = set.indices();
        let ca = lqgame::linalg::select_rows(&avi.c_u, idx);
        let da = lqgame::linalg::select_rows(&avi.d_x, idx);
        let c_a = lqgame::linalg::select_entries(&avi.c, idx);
        let (ku, ku0, kl, kl0) = schur_maps(&avi.h, &avi.f_x, &avi.f, &ca, &da, &c_a);
        assert!((maps.ku - ku).amax() < 1e-8);
        assert!((maps.ku0 - ku0).amax() < 1e-8);
        assert!((maps.kl - kl).amax() < 1e-8);
        assert!((maps.kl0 - kl0).amax() < 1e-8);
    }
}
