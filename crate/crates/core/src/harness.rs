//! Random game generation and the explicit-versus-iterative benchmark.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::{explore, ExplorerConfig};
use crate::game::{condense, validate_game, CondensedAvi, GameSpec, Mode, ParamBox};
use crate::linalg::spectral_radius;
use crate::map::Evaluation;
use crate::solver::{natural_residual, solve_avi, Metric, SolveStatus, SolverSettings};

const MAX_ATTEMPTS: usize = 100;
const MAX_SPECTRAL_RADIUS: f64 = 1.2;
const STATE_BOUND: f64 = 5.0;
const INPUT_BOUND: f64 = 1.0;

fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..=1.0))
}

/// Random game with `n_agents` scalar-input agents: `A` with spectral radius
/// at most 1.2, `Q_i = MᵀM + I`, `R_i = I`, `|x| ≤ 5`, `|u_i| ≤ 1`, and
/// parameter box `[−1, 1]^{n_x}`. Deterministic in `seed`.
pub fn random_game(n_x: usize, horizon: usize, n_agents: usize, seed: u64) -> Result<GameSpec> {
    if n_x == 0 || horizon == 0 || n_agents == 0 {
        return Err(Error::Dimension("n_x, T and N must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let mut a = uniform_matrix(&mut rng, n_x, n_x);
        let rho = spectral_radius(&a);
        if rho > MAX_SPECTRAL_RADIUS {
            a *= MAX_SPECTRAL_RADIUS / rho;
        }
        let b: Vec<DMatrix<f64>> = (0..n_agents).map(|_| uniform_matrix(&mut rng, n_x, 1)).collect();
        let q: Vec<DMatrix<f64>> = (0..n_agents)
            .map(|_| {
                let m = uniform_matrix(&mut rng, n_x, n_x);
                m.transpose() * m + DMatrix::identity(n_x, n_x)
            })
            .collect();
        let r = vec![DMatrix::identity(1, 1); n_agents];
        let mut spec = GameSpec::unconstrained(a, b, q, r, horizon, ParamBox::cube(n_x, 1.0));
        let mut stage_d = DMatrix::zeros(2 * n_x, n_x);
        for k in 0..n_x {
            stage_d[(k, k)] = 1.0;
            stage_d[(n_x + k, k)] = -1.0;
        }
        spec.stage_d = stage_d;
        spec.d = DVector::from_element(2 * n_x, STATE_BOUND);
        spec.stage_g = (0..n_agents)
            .map(|i| {
                let mut g = DMatrix::zeros(2 * n_agents, 1);
                g[(2 * i, 0)] = 1.0;
                g[(2 * i + 1, 0)] = -1.0;
                g
            })
            .collect();
        spec.g = DVector::from_element(2 * n_agents, INPUT_BOUND);
        spec.mode = Mode::FiniteHorizon;
        if !validate_game(&spec).is_empty() {
            continue;
        }
        let Ok(avi) = condense(&spec) else { continue };
        if avi.joint_polyhedron().feasibility()?.is_empty() {
            continue;
        }
        return Ok(spec);
    }
    Err(Error::GenerationFailure { attempts: MAX_ATTEMPTS })
}

/// Parameters in the box with a nonempty feasible-input set, by rejection.
pub fn sample_feasible_states(avi: &CondensedAvi, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(count);
    let bx = &avi.x_box;
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > 1000 * count.max(1) {
            break;
        }
        let x = DVector::from_fn(avi.n, |k, _| rng.random_range(bx.lo[k]..=bx.hi[k]));
        if !avi.param_cuts.contains(&x, 0.0) {
            continue;
        }
        if !avi.feasible_inputs(&x).feasibility()?.is_empty() {
            out.push(x);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(rename = "_comment", skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub n_games: usize,
    pub n_states_per_game: usize,
    pub n_x: Vec<usize>,
    pub horizons: Vec<usize>,
    pub n_agents: usize,
    /// Seconds per map.
    pub offline_time_limit: f64,
    /// Seconds per budgeted iterative solve.
    pub online_budget: f64,
    pub residual_target: f64,
    pub rng_seed: u64,
    pub workers: usize,
    pub timing_repeats: usize,
    /// Where to store each game and map, if anywhere.
    pub artifact_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            comment: None,
            n_games: 100,
            n_states_per_game: 20,
            n_x: vec![2, 4, 6, 8],
            horizons: vec![4, 7, 10],
            n_agents: 2,
            offline_time_limit: 1800.0,
            online_budget: 0.1,
            residual_target: 1e-6,
            rng_seed: 0,
            workers: 1,
            timing_repeats: 7,
            artifact_dir: None,
        }
    }
}

impl BenchConfig {
    fn check(&self) -> Result<()> {
        let bad = |path: &str, msg: &str| Err(Error::Config { path: path.into(), msg: msg.into() });
        if self.n_games == 0 {
            return bad("n_games", "must be positive");
        }
        if self.n_states_per_game == 0 {
            return bad("n_states_per_game", "must be positive");
        }
        if self.n_x.is_empty() || self.n_x.contains(&0) {
            return bad("n_x", "needs positive entries");
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return bad("horizons", "needs positive entries");
        }
        if self.n_agents == 0 {
            return bad("n_agents", "must be positive");
        }
        if !(self.offline_time_limit > 0.0) {
            return bad("offline_time_limit", "must be positive");
        }
        if !(self.online_budget > 0.0) {
            return bad("online_budget", "must be positive");
        }
        if !(self.residual_target > 0.0) {
            return bad("residual_target", "must be positive");
        }
        if self.timing_repeats == 0 {
            return bad("timing_repeats", "must be positive");
        }
        Ok(())
    }
}

/// One `(game, x⁰)` measurement. Columns ending in `_s`, and
/// `budget_residual`, depend on timing; all others are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n_x: usize,
    pub horizon: usize,
    pub game: usize,
    pub seed: u64,
    pub state: usize,
    pub status: String,
    pub completed: bool,
    pub pieces: usize,
    pub n_constraints: usize,
    pub explicit_status: String,
    pub explicit_residual: f64,
    pub iter_status: String,
    pub iters_to_target: usize,
    pub iter_residual: f64,
    pub max_abs_diff: f64,
    pub build_time_s: f64,
    pub explicit_eval_s: f64,
    pub iter_time_s: f64,
    pub budget_residual: f64,
}

impl BenchRow {
    /// The reproducible columns, rendered for comparison.
    pub fn non_timing(&self) -> String {
        format!(
            "{} {} {} {} {} {} {} {} {} {} {:e} {} {} {:e} {:e}",
            self.n_x,
            self.horizon,
            self.game,
            self.seed,
            self.state,
            self.status,
            self.completed,
            self.pieces,
            self.n_constraints,
            self.explicit_status,
            self.explicit_residual,
            self.iter_status,
            self.iters_to_target,
            self.iter_residual,
            self.max_abs_diff
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub n_x: usize,
    pub horizon: usize,
    pub games: usize,
    pub completed: usize,
    pub median_explicit_eval_s: f64,
    pub median_iter_time_s: f64,
    pub max_explicit_residual: f64,
}

impl CellSummary {
    pub fn completion_percent(&self) -> f64 {
        if self.games == 0 {
            0.0
        } else {
            100.0 * self.completed as f64 / self.games as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub cells: Vec<CellSummary>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Median wall time of `repeats` calls of `f`, and the last result.
pub fn time_median<T>(repeats: usize, mut f: impl FnMut() -> T) -> (f64, T) {
    let mut times = Vec::with_capacity(repeats);
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let out = f();
        times.push(start.elapsed().as_secs_f64());
        last = Some(out);
    }
    (median(&mut times), last.expect("at least one repeat"))
}

fn status_of(e: &Error) -> String {
    match e {
        Error::Infeasible => "infeasible".into(),
        Error::GenerationFailure { .. } => "generation-failure".into(),
        Error::AssumptionViolated { .. } => "assumption-violated".into(),
        other => format!("error: {other}"),
    }
}

fn failed_row(n_x: usize, horizon: usize, game: usize, seed: u64, status: String) -> BenchRow {
    BenchRow {
        n_x,
        horizon,
        game,
        seed,
        state: 0,
        status,
        completed: false,
        pieces: 0,
        n_constraints: 0,
        explicit_status: String::new(),
        explicit_residual: f64::NAN,
        iter_status: String::new(),
        iters_to_target: 0,
        iter_residual: f64::NAN,
        max_abs_diff: f64::NAN,
        build_time_s: f64::NAN,
        explicit_eval_s: f64::NAN,
        iter_time_s: f64::NAN,
        budget_residual: f64::NAN,
    }
}

fn bench_game(cfg: &BenchConfig, n_x: usize, horizon: usize, game: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let spec = random_game(n_x, horizon, cfg.n_agents, seed)?;
    let avi = condense(&spec)?;
    let ecfg = ExplorerConfig {
        time_limit: cfg.offline_time_limit,
        parallel_workers: cfg.workers,
        ..Default::default()
    };
    let (map, report) = explore(&avi, &ecfg)?;
    if let Some(dir) = &cfg.artifact_dir {
        std::fs::create_dir_all(dir)?;
        let stem = format!("game_nx{n_x}_T{horizon}_{game}");
        std::fs::write(dir.join(format!("{stem}.json")), spec.to_json()?)?;
        map.save(&dir.join(format!("{stem}_map.json")))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let states = sample_feasible_states(&avi, cfg.n_states_per_game, &mut rng)?;
    let to_target = SolverSettings {
        tol_residual: cfg.residual_target,
        max_iters: 1_000_000,
        polish: false,
        metric: Metric::Preconditioned,
        ..Default::default()
    };
    let budgeted = SolverSettings {
        tol_residual: f64::MIN_POSITIVE,
        max_iters: usize::MAX,
        budget_seconds: Some(cfg.online_budget),
        polish: false,
        ..Default::default()
    };

    let mut rows = Vec::with_capacity(states.len());
    for (k, x) in states.iter().enumerate() {
        let mut row = failed_row(n_x, horizon, game, seed, "ok".into());
        row.state = k;
        row.completed = report.completed;
        row.pieces = map.len();
        row.n_constraints = avi.n_constraints();
        row.build_time_s = report.wall_time;

        let (t_exp, eval) = time_median(cfg.timing_repeats, || map.evaluate(x));
        row.explicit_eval_s = t_exp;
        let u_exp = match eval? {
            Evaluation::Solution { u, .. } => {
                row.explicit_status = "solution".into();
                row.explicit_residual = natural_residual(&avi, &u, x)?;
                Some(u)
            }
            Evaluation::Infeasible => {
                row.explicit_status = "infeasible".into();
                None
            }
            Evaluation::Uncovered => {
                row.explicit_status = "uncovered".into();
                None
            }
        };

        let (t_it, sol) = time_median(cfg.timing_repeats, || solve_avi(&avi, x, &to_target, None));
        match sol {
            Ok(sol) => {
                row.iter_time_s = t_it;
                row.iter_status = match sol.status {
                    SolveStatus::Converged => "converged".into(),
                    SolveStatus::BudgetExhausted => "budget-exhausted".into(),
                };
                row.iters_to_target = sol.iterations;
                row.iter_residual = sol.residual;
                if let Some(u) = &u_exp {
                    row.max_abs_diff = (u - &sol.u).amax();
                }
            }
            Err(e) => row.iter_status = status_of(&e),
        }
        row.budget_residual = match solve_avi(&avi, x, &budgeted, None) {
            Ok(s) => s.residual,
            Err(_) => f64::NAN,
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Run every `(n_x, T)` cell. Failures become rows with a status message.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.check()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for &horizon in &cfg.horizons {
        for &n_x in &cfg.n_x {
            let mut completed = 0;
            let mut cell_rows = Vec::new();
            for game in 0..cfg.n_games {
                let seed: u64 = seeds.random();
                match bench_game(cfg, n_x, horizon, game, seed) {
                    Ok(r) => {
                        if r.first().is_some_and(|r| r.completed) {
                            completed += 1;
                        }
                        cell_rows.extend(r);
                    }
                    Err(e) => {
                        log::warn!("game {game} (n_x {n_x}, T {horizon}): {e}");
                        cell_rows.push(failed_row(n_x, horizon, game, seed, status_of(&e)));
                    }
                }
            }
            let mut ev: Vec<f64> = cell_rows.iter().map(|r| r.explicit_eval_s).filter(|v| v.is_finite()).collect();
            let mut it: Vec<f64> = cell_rows.iter().map(|r| r.iter_time_s).filter(|v| v.is_finite()).collect();
            cells.push(CellSummary {
                n_x,
                horizon,
                games: cfg.n_games,
                completed,
                median_explicit_eval_s: median(&mut ev),
                median_iter_time_s: median(&mut it),
                max_explicit_residual: cell_rows
                    .iter()
                    .map(|r| r.explicit_residual)
                    .filter(|v| v.is_finite())
                    .fold(0.0, f64::max),
            });
            rows.extend(cell_rows);
        }
    }
    Ok(BenchReport { rows, cells })
}

impl BenchReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Completion percentages with one row per horizon and one column per
    /// state dimension.
    pub fn write_completion_table<W: Write>(&self, out: W) -> Result<()> {
        let mut n_x: Vec<usize> = self.cells.iter().map(|c| c.n_x).collect();
        n_x.dedup();
        n_x.sort_unstable();
        n_x.dedup();
        let mut horizons: Vec<usize> = self.cells.iter().map(|c| c.horizon).collect();
        horizons.sort_unstable();
        horizons.dedup();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["T".to_string()];
        header.extend(n_x.iter().map(|n| format!("n_x={n}")));
        w.write_record(&header)?;
        for t in horizons {
            let mut rec = vec![t.to_string()];
            for n in &n_x {
                let cell = self.cells.iter().find(|c| c.horizon == t && c.n_x == *n);
                rec.push(cell.map_or_else(String::new, |c| format!("{:.0}", c.completion_percent())));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
