//! Combinatorial active-set exploration of the parameter space, and the
//! exhaustive enumeration it is checked against.

use std::collections::HashSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::avi::{build_piece, dual_reduce, ActivePiece, ActiveSet, PieceFlag};
use crate::error::{Error, Result};
use crate::game::CondensedAvi;
use crate::linalg::{rows_independent, select_entries, select_rows};
use crate::lp::{self, LinearProgram, LpOutcome};
use crate::map::ExplicitMap;
use crate::polyhedra::Feasibility;
use crate::solver::{slack_active_set, solve_avi, SolverSettings};

/// Slack threshold for reading the active set off an iterative solution.
pub const SEED_ACT_TOL: f64 = 1e-7;
/// Largest constraint count accepted by [`brute_force_enumerate`].
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorerConfig {
    /// Wall-clock budget in seconds.
    pub time_limit: f64,
    pub max_pieces: usize,
    pub parallel_workers: usize,
    /// Extra parameters whose equilibrium active sets seed the worklist.
    pub seed_states: Vec<Vec<f64>>,
}

impl Default for ExplorerConfig {
    fn default() -> Self {
        Self {
            time_limit: 1800.0,
            max_pieces: 1_000_000,
            parallel_workers: 1,
            seed_states: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub pieces_found: usize,
    pub sets_visited: usize,
    pub sets_rank_deficient: usize,
    pub sets_empty_region: usize,
    /// Seconds.
    pub wall_time: f64,
    pub completed: bool,
}

/// Nonnegative multipliers on `set` satisfying stationarity at `u`, found
/// as a basic solution of `C_Aᵀ λ = −𝓕(u)`, `λ ≥ 0`.
fn stationary_multipliers(avi: &CondensedAvi, u: &DVector<f64>, x0: &DVector<f64>, set: &ActiveSet) -> Option<DVector<f64>> {
    let ca_t = select_rows(&avi.c_u, set.indices()).transpose();
    let rhs = -avi.pseudo_gradient(u, x0);
    let k = set.len();
    let lp = LinearProgram {
        c: DVector::zeros(k),
        a_ub: DMatrix::zeros(0, k),
        b_ub: DVector::zeros(0),
        a_eq: ca_t,
        b_eq: rhs,
    };
    match lp::solve(&lp).ok()? {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}

/// Active set of the equilibrium at `x0`, reduced to linearly independent
/// rows when needed.
pub fn seed_active_set(avi: &CondensedAvi, x0: &DVector<f64>) -> Result<ActiveSet> {
    let settings = SolverSettings { tol_residual: 1e-10, ..Default::default() };
    let sol = solve_avi(avi, x0, &settings, None)?;
    let set = slack_active_set(avi, &sol.u, x0, SEED_ACT_TOL);
    if rows_independent(&avi.c_u, set.indices()) {
        return Ok(set);
    }
    let lambda = match stationary_multipliers(avi, &sol.u, x0, &set) {
        Some(l) => l,
        None => {
            // fall back to a greedy independent subset
            let mut basis = crate::linalg::RowBasis::new();
            let keep: Vec<usize> = set
                .indices()
                .iter()
                .copied()
                .filter(|&i| basis.push(avi.c_u.row(i).transpose().into_owned()))
                .collect();
            return Ok(ActiveSet::new(keep));
        }
    };
    Ok(dual_reduce(avi, &set, &lambda)?.0)
}

enum Outcome {
    Piece(Box<ActivePiece>),
    Empty,
    /// Rank-deficient set whose relaxed region is nonempty.
    DeficientExpand,
    DeficientPrune,
    Skipped,
}

/// Relaxed nonemptiness of a rank-deficient set: some `(x, u)` with the
/// active rows tight, all rows satisfied and `x` admissible.
fn deficient_region_nonempty(avi: &CondensedAvi, set: &ActiveSet) -> Result<bool> {
    let joint = avi.joint_polyhedron();
    let n = avi.n;
    let nu = avi.n_inputs();
    let idx = set.indices();
    let mut a_eq = DMatrix::zeros(idx.len(), n + nu);
    a_eq.view_mut((0, 0), (idx.len(), n)).copy_from(&select_rows(&avi.d_x, idx));
    a_eq.view_mut((0, n), (idx.len(), nu)).copy_from(&select_rows(&avi.c_u, idx));
    let b_eq = select_entries(&avi.c, idx);
    Ok(!joint.feasibility_with_equalities(Some((&a_eq, &b_eq)))?.is_empty())
}

fn process(avi: &CondensedAvi, set: &ActiveSet) -> Result<Outcome> {
    if !rows_independent(&avi.c_u, set.indices()) {
        return Ok(if deficient_region_nonempty(avi, set)? {
            Outcome::DeficientExpand
        } else {
            Outcome::DeficientPrune
        });
    }
    let mut piece = match build_piece(avi, set) {
        Ok(p) => p,
        Err(Error::RankDeficient | Error::NumericalFailure(_)) => {
            return Ok(if deficient_region_nonempty(avi, set)? {
                Outcome::DeficientExpand
            } else {
                Outcome::DeficientPrune
            });
        }
        Err(e) => return Err(e),
    };
    match piece.region.feasibility()? {
        Feasibility::Feasible { .. } => Ok(Outcome::Piece(Box::new(piece))),
        Feasibility::WeaklyFeasible { .. } => {
            piece.flag = PieceFlag::LowerDimensional;
            Ok(Outcome::Piece(Box::new(piece)))
        }
        Feasibility::Empty { .. } => Ok(Outcome::Empty),
    }
}

fn seeds(avi: &CondensedAvi, cfg: &ExplorerConfig) -> Result<Vec<ActiveSet>> {
    let mut out = Vec::new();
    if let Some(w) = avi.joint_polyhedron().feasibility()?.witness() {
        let x0 = w.rows(0, avi.n).into_owned();
        out.push(seed_active_set(avi, &x0)?);
    }
    for s in &cfg.seed_states {
        if s.len() != avi.n {
            return Err(Error::Dimension(format!("seed state has {} entries, expected {}", s.len(), avi.n)));
        }
        let x0 = DVector::from_column_slice(s);
        match seed_active_set(avi, &x0) {
            Ok(a) => out.push(a),
            Err(Error::Infeasible) => log::warn!("seed state {s:?} has no feasible input"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Explore active sets breadth-first from the seeds, one level at a time.
///
/// Each level is processed by up to `parallel_workers` threads and merged
/// in worklist order, so results do not depend on scheduling.
pub fn explore(avi: &CondensedAvi, cfg: &ExplorerConfig) -> Result<(ExplicitMap, ExplorationReport)> {
    let start = Instant::now();
    let p = avi.n_constraints();
    let out_of_time = || start.elapsed().as_secs_f64() >= cfg.time_limit;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel_workers.max(1))
        .build()
        .map_err(|e| Error::NumericalFailure(format!("thread pool: {e}")))?;

    let mut report = ExplorationReport::default();
    let mut visited: HashSet<ActiveSet> = HashSet::new();
    let mut level: Vec<ActiveSet> = Vec::new();
    for s in seeds(avi, cfg)? {
        if visited.insert(s.clone()) {
            level.push(s);
        }
    }
    let mut pieces = Vec::new();
    let mut completed = true;

    while !level.is_empty() {
        if out_of_time() || pieces.len() >= cfg.max_pieces {
            completed = false;
            break;
        }
        let results: Vec<Result<Outcome>> = if cfg.parallel_workers > 1 {
            pool.install(|| {
                level
                    .par_iter()
                    .map(|s| if out_of_time() { Ok(Outcome::Skipped) } else { process(avi, s) })
                    .collect()
            })
        } else {
            level
                .iter()
                .map(|s| if out_of_time() { Ok(Outcome::Skipped) } else { process(avi, s) })
                .collect()
        };

        let mut next = Vec::new();
        let mut push = |s: ActiveSet, next: &mut Vec<ActiveSet>| {
            if visited.insert(s.clone()) {
                next.push(s);
            }
        };
        for (set, res) in level.iter().zip(results) {
            let outcome = res?;
            if matches!(outcome, Outcome::Skipped) {
                completed = false;
                continue;
            }
            report.sets_visited += 1;
            match outcome {
                Outcome::Piece(piece) => {
                    if pieces.len() >= cfg.max_pieces {
                        completed = false;
                        continue;
                    }
                    pieces.push(*piece);
                    for i in 0..p {
                        if !set.contains(i) {
                            push(set.with(i), &mut next);
                        }
                    }
                    for &i in set.indices() {
                        push(set.without(i), &mut next);
                    }
                }
                Outcome::DeficientExpand => {
                    report.sets_rank_deficient += 1;
                    for &i in set.indices() {
                        push(set.without(i), &mut next);
                    }
                }
                Outcome::DeficientPrune => report.sets_rank_deficient += 1,
                Outcome::Empty => report.sets_empty_region += 1,
                Outcome::Skipped => unreachable!(),
            }
        }
        if !completed {
            break;
        }
        level = next;
    }

    report.pieces_found = pieces.len();
    report.completed = completed;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((ExplicitMap::new(avi, pieces, completed), report))
}

/// Every active set with independent rows and a nonempty region.
pub fn brute_force_enumerate(avi: &CondensedAvi) -> Result<ExplicitMap> {
    let p = avi.n_constraints();
    if p > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyConstraints { p, limit: BRUTE_FORCE_LIMIT });
    }
    let results: Vec<Result<Option<ActivePiece>>> = (0u32..(1u32 << p))
        .into_par_iter()
        .map(|mask| {
            let set = ActiveSet::new((0..p).filter(|&i| mask & (1 << i) != 0).collect());
            if !rows_independent(&avi.c_u, set.indices()) {
                return Ok(None);
            }
            match process(avi, &set)? {
                Outcome::Piece(piece) => Ok(Some(*piece)),
                _ => Ok(None),
            }
        })
        .collect();
    let mut pieces = Vec::new();
    for r in results {
        if let Some(piece) = r? {
            pieces.push(piece);
        }
    }
    Ok(ExplicitMap::new(avi, pieces, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::condense;
    use crate::testutil::{diamond, double_integrator, toy};

    fn feasible_sets(m: &ExplicitMap) -> Vec<ActiveSet> {
        m.pieces
            .iter()
            .filter(|p| p.flag == PieceFlag::Full)
            .map(|p| p.active_set.clone())
            .collect()
    }

    #[test]
    fn unconstrained_gives_single_piece() {
        let avi = toy(&[2.0], 1, &[1.0], 1, &[], &[], &[]);
        let (map, report) = explore(&avi, &ExplorerConfig::default()).unwrap();
        assert!(report.completed);
        assert_eq!(map.len(), 1);
        assert!(map.pieces[0].active_set.is_empty());
        assert_eq!(brute_force_enumerate(&avi).unwrap().len(), 1);
    }

    #[test]
    fn seed_clamps_at_boundary() {
        let mut avi = toy(&[1.0], 1, &[0.0], 1, &[1.0], &[0.0], &[0.0]);
        avi.f[0] = -0.5;
        let x = DVector::from_element(1, 0.0);
        assert_eq!(seed_active_set(&avi, &x).unwrap().indices(), &[0]);
        avi.f[0] = 0.5;
        assert!(seed_active_set(&avi, &x).unwrap().is_empty());
    }

    #[test]
    fn identical_rows_never_form_a_piece() {
        let mut avi = toy(&[1.0], 1, &[0.0], 1, &[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]);
        avi.f[0] = -1.0;
        let bf = brute_force_enumerate(&avi).unwrap();
        assert!(bf.pieces.iter().all(|p| p.active_set.len() <= 1));
        let (map, report) = explore(&avi, &ExplorerConfig::default()).unwrap();
        assert!(report.completed);
        assert!(map.pieces.iter().all(|p| p.active_set.len() <= 1));
        assert!(!map.is_empty());
    }

    #[test]
    fn matches_brute_force_on_double_integrator() {
        let avi = condense(&double_integrator(3, 1.0)).unwrap();
        assert_eq!(avi.n_constraints(), 12);
        let (map, report) = explore(&avi, &ExplorerConfig::default()).unwrap();
        assert!(report.completed);
        let bf = brute_force_enumerate(&avi).unwrap();
        assert_eq!(feasible_sets(&map), feasible_sets(&bf));
        for p in &map.pieces {
            assert!(rows_independent(&avi.c_u, p.active_set.indices()));
        }
    }

    #[test]
    fn diamond_has_lower_dimensional_pairs() {
        let avi = diamond();
        let (map, report) = explore(&avi, &ExplorerConfig::default()).unwrap();
        assert!(report.completed);
        assert!(report.sets_rank_deficient > 0);
        let find = |s: &[usize]| map.pieces.iter().find(|p| p.active_set.indices() == s);
        assert!(find(&[0, 1, 2, 3]).is_none());
        assert!(find(&[]).is_none());
        assert_eq!(find(&[0, 1]).unwrap().flag, PieceFlag::LowerDimensional);
        assert_eq!(find(&[2, 3]).unwrap().flag, PieceFlag::LowerDimensional);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let avi = condense(&double_integrator(4, 0.5)).unwrap();
        let (a, _) = explore(&avi, &ExplorerConfig::default()).unwrap();
        let cfg = ExplorerConfig { parallel_workers: 4, ..Default::default() };
        let (b, _) = explore(&avi, &cfg).unwrap();
        assert_eq!(a.serialize().unwrap(), b.serialize().unwrap());
    }

    #[test]
    fn piece_cap_marks_incomplete() {
        let avi = condense(&double_integrator(3, 1.0)).unwrap();
        let cfg = ExplorerConfig { max_pieces: 1, ..Default::default() };
        let (map, report) = explore(&avi, &cfg).unwrap();
        assert!(!report.completed);
        assert!(!map.completed);
        assert_eq!(map.len(), 1);
    }

    #[test]
    fn brute_force_guard() {
        let p = 21;
        let avi = toy(&[1.0], 1, &[0.0], 1, &vec![1.0; p], &vec![0.0; p], &vec![1.0; p]);
        assert!(matches!(
            brute_force_enumerate(&avi),
            Err(Error::TooManyConstraints { p: 21, .. })
        ));
    }
}
