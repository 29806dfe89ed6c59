//! Explicit open-loop Nash equilibria of constrained linear-quadratic
//! dynamic games.
//!
//! A game is condensed into a parametric affine variational inequality in
//! the initial state. Exploring its active sets yields a piecewise-affine
//! map from state to equilibrium input sequence, which can be evaluated by
//! point location instead of an online iterative solve.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod avi;
pub mod error;
pub mod explorer;
pub mod game;
pub mod harness;
pub mod linalg;
pub mod lp;
pub mod map;
pub mod mpc;
pub mod overtake;
pub mod polyhedra;
pub mod riccati;
pub mod solver;

#[cfg(test)]
mod testutil;

pub use avi::{build_piece, dual_reduce, kkt_residual, solve_kkt_active, ActiveMaps, ActivePiece, ActiveSet, PieceFlag};
pub use error::{Error, Result};
pub use explorer::{brute_force_enumerate, explore, seed_active_set, ExplorationReport, ExplorerConfig};
pub use game::{
    condense, condense_auto, condense_infinite_horizon, validate_game, AgentBlock, CondensedAvi, GameSpec, Mode,
    ParamBox,
};
pub use harness::{random_game, run_bench, BenchConfig, BenchReport, BenchRow};
pub use map::{Evaluation, ExplicitMap};
pub use mpc::{simulate, Feedback, FeedbackLaw, PhaseController, PhaseMachine, Plant, Trajectory};
pub use overtake::{build_overtake_scenario, OvertakeConfig, OvertakeScenario};
pub use polyhedra::{Feasibility, Polyhedron};
pub use riccati::{solve_coupled_riccati, solve_dare, TerminalIngredients};
pub use solver::{natural_residual, solve_avi, AviSolution, SolveStatus, SolverSettings};
