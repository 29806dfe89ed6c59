//! Shared fixtures for the criterion benchmarks.

use lqgame::harness::sample_feasible_states;
use lqgame::{condense, explore, random_game, CondensedAvi, ExplicitMap, ExplorerConfig, ParamBox};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A random two-agent game with its explicit map and feasible sample states.
pub struct Fixture {
    pub label: String,
    pub avi: CondensedAvi,
    pub map: ExplicitMap,
    pub states: Vec<DVector<f64>>,
}

pub fn random_avi(n_x: usize, horizon: usize, seed: u64, half_width: f64) -> CondensedAvi {
    let mut spec = random_game(n_x, horizon, 2, seed).expect("game generation");
    spec.x_box = ParamBox::cube(n_x, half_width);
    condense(&spec).expect("condensation")
}

pub fn fixture(n_x: usize, horizon: usize, seed: u64) -> Fixture {
    let avi = random_avi(n_x, horizon, seed, 1.5);
    let (map, _) = explore(&avi, &ExplorerConfig::default()).expect("exploration");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = sample_feasible_states(&avi, 32, &mut rng).expect("sampling");
    Fixture {
        label: format!("nx{n_x}_T{horizon}"),
        avi,
        map,
        states,
    }
}

pub fn fixtures() -> Vec<Fixture> {
    [(2, 4), (3, 5), (4, 5)]
        .iter()
        .enumerate()
        .map(|(k, &(n, t))| fixture(n, t, 1000 + k as u64))
        .collect()
}
