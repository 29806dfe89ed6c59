mod common;

use lqgame::linalg::rows_independent;
use lqgame::{condense, dual_reduce, explore, random_game, ActiveSet, ExplicitMap, ExplorerConfig, ParamBox, Polyhedron};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Unit box in the plane cut by halfspaces that keep the origin inside.
fn cut_box(cuts: &[(f64, f64, f64)]) -> Polyhedron {
    let mut rows = vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0];
    let mut rhs = vec![1.0; 4];
    for &(a, b, c) in cuts {
        rows.extend([a, b]);
        rhs.push(c);
    }
    Polyhedron::new(DMatrix::from_row_slice(rhs.len(), 2, &rows), DVector::from_vec(rhs))
}

fn cut_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.05f64..1.0), 0..4)
}

fn point() -> impl Strategy<Value = DVector<f64>> {
    (-4.0f64..4.0, -4.0f64..4.0).prop_map(|(a, b)| DVector::from_row_slice(&[a, b]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn projection_is_feasible_and_satisfies_the_variational_inequality(
        cuts in cut_strategy(), z in point(), w in point(),
    ) {
        let poly = cut_box(&cuts);
        let y = poly.project(&z).unwrap();
        prop_assert!(poly.max_violation(&y) <= 1e-9);
        let wp = poly.project(&w).unwrap();
        prop_assert!((&z - &y).dot(&(&wp - &y)) <= 1e-8);
        prop_assert!((&z - &y).dot(&(-&y)) <= 1e-8);
    }

    #[test]
    fn projection_is_nonexpansive(cuts in cut_strategy(), z1 in point(), z2 in point()) {
        let poly = cut_box(&cuts);
        let d = (poly.project(&z1).unwrap() - poly.project(&z2).unwrap()).norm();
        prop_assert!(d <= (&z1 - &z2).norm() + 1e-9);
    }

    #[test]
    fn feasible_points_are_fixed(cuts in cut_strategy(), z in point()) {
        let poly = cut_box(&cuts);
        if poly.contains(&z, 0.0) {
            prop_assert!((poly.project(&z).unwrap() - &z).amax() <= 1e-10);
        }
    }

    #[test]
    fn witness_lies_inside(cuts in cut_strategy()) {
        let poly = cut_box(&cuts);
        let feas = poly.feasibility().unwrap();
        let w = feas.witness().expect("origin is feasible");
        prop_assert!(poly.contains(w, 1e-9));
        prop_assert!(feas.margin() > 0.0);
    }

    #[test]
    fn dual_reduce_preserves_the_weighted_rows(
        seed in 0u64..200,
        weights in prop::collection::vec(0.0f64..2.0, 6),
    ) {
        let mut spec = random_game(2, 2, 2, seed).unwrap();
        spec.x_box = ParamBox::cube(2, 2.0);
        let mut avi = condense(&spec).unwrap();
        let p = avi.n_constraints();
        // row p repeats the stage-0 upper bound of agent 1, row p+1 doubles that of
        // agent 2, row p+2 is their sum
        let base = p - 8;
        let extra = DMatrix::from_fn(3, avi.n_inputs(), |r, c| match r {
            0 => avi.c_u[(base, c)],
            1 => 2.0 * avi.c_u[(base + 2, c)],
            _ => avi.c_u[(base, c)] + avi.c_u[(base + 2, c)],
        });
        avi.c_u = avi.c_u.clone().resize_vertically(p + 3, 0.0);
        avi.c_u.view_mut((p, 0), (3, avi.n_inputs())).copy_from(&extra);
        avi.d_x = avi.d_x.clone().resize_vertically(p + 3, 0.0);
        avi.c = avi.c.clone().resize_vertically(p + 3, 1.0);
        let set = ActiveSet::new(vec![base, base + 2, base + 4, p, p + 1, p + 2]);
        let lam = DVector::from_vec(weights);
        let (rset, rlam) = dual_reduce(&avi, &set, &lam).unwrap();
        prop_assert!(rows_independent(&avi.c_u, rset.indices()));
        prop_assert!(rlam.iter().all(|v| *v >= 0.0));
        let weighted = |s: &ActiveSet, l: &DVector<f64>| {
            s.indices().iter().zip(l.iter()).fold(DVector::zeros(avi.n_inputs()), |acc, (&i, &v)| {
                acc + avi.c_u.row(i).transpose() * v
            })
        };
        let before = weighted(&set, &lam);
        prop_assert!((weighted(&rset, &rlam) - &before).amax() <= 1e-9 * (1.0 + before.amax()));
    }
}

#[test]
fn serialized_maps_roundtrip_and_evaluate_identically() {
    let mut spec = random_game(3, 3, 2, 42).unwrap();
    spec.x_box = ParamBox::cube(3, 2.0);
    let avi = condense(&spec).unwrap();
    let (map, _) = explore(&avi, &ExplorerConfig::default()).unwrap();
    let bytes = map.serialize().unwrap();
    let back = ExplicitMap::deserialize(&bytes).unwrap();
    assert_eq!(back.serialize().unwrap(), bytes);
    for x in common::grid(&avi.x_box, 6) {
        assert_eq!(format!("{:?}", map.evaluate(&x).unwrap()), format!("{:?}", back.evaluate(&x).unwrap()));
    }
}

#[test]
fn pieces_agree_where_regions_overlap() {
    let mut spec = random_game(2, 3, 2, 5).unwrap();
    spec.x_box = ParamBox::cube(2, 3.0);
    let avi = condense(&spec).unwrap();
    let (map, _) = explore(&avi, &ExplorerConfig::default()).unwrap();
    for x in common::grid(&avi.x_box, 25) {
        let hits: Vec<_> = map.pieces.iter().filter(|p| p.region.contains(&x, 1e-9)).collect();
        for pair in hits.windows(2) {
            assert!((pair[0].primal(&x) - pair[1].primal(&x)).amax() <= 1e-8);
        }
    }
}
