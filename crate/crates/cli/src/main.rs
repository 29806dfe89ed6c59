use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use nalgebra::DVector;

use lqgame::mpc::SimulationStatus;
use lqgame::{
    build_overtake_scenario, condense_auto, explore, natural_residual, run_bench, BenchConfig, Error, Evaluation,
    ExplicitMap, ExplorerConfig, GameSpec, OvertakeConfig,
};

const EXIT_OTHER: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_PARTIAL: u8 = 3;
const EXIT_CONFIG: u8 = 4;

/// Build and evaluate explicit equilibrium maps of linear-quadratic games.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore a game's active sets and write its explicit map.
    Build {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seconds.
        #[arg(long, default_value_t = 1800.0)]
        time_limit: f64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Evaluate a map at one state.
    Eval {
        #[arg(long)]
        map: PathBuf,
        /// Comma-separated state.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// Run the overtake scenario and write the trajectory.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare explicit evaluation against the iterative solver.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the completion table here.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Natural residual of a map's output for a game.
    Residual {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
}

fn parse_state(text: &str) -> anyhow::Result<DVector<f64>> {
    let vals = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad state entry {s:?}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(DVector::from_vec(vals))
}

fn read_game(path: &Path) -> anyhow::Result<GameSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(GameSpec::from_json(&text)?)
}

fn print_evaluation(eval: &Evaluation) -> u8 {
    match eval {
        Evaluation::Solution { u, piece } => {
            let out = serde_json::json!({ "u": u.as_slice(), "piece": piece });
            println!("{out}");
            0
        }
        Evaluation::Infeasible => {
            eprintln!("no feasible input at this state");
            EXIT_INFEASIBLE
        }
        Evaluation::Uncovered => {
            eprintln!("state not covered by the map");
            EXIT_PARTIAL
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Build { game, out, time_limit, workers } => {
            if time_limit.is_nan() || time_limit <= 0.0 {
                return Err(Error::Config { path: "--time-limit".into(), msg: "must be positive".into() }.into());
            }
            let spec = read_game(&game)?;
            let avi = condense_auto(&spec)?;
            let cfg = ExplorerConfig { time_limit, parallel_workers: workers, ..Default::default() };
            let (map, report) = explore(&avi, &cfg)?;
            map.save(&out)?;
            eprintln!("{}", serde_json::to_string(&report)?);
            Ok(if report.completed { 0 } else { EXIT_PARTIAL })
        }
        Command::Eval { map, x } => {
            let map = ExplicitMap::load(&map)?;
            let x = parse_state(&x)?;
            Ok(print_evaluation(&map.evaluate(&x)?))
        }
        Command::Simulate { scenario, steps, out } => {
            let cfg = OvertakeConfig::load(&scenario)?;
            let mut sc = build_overtake_scenario(&cfg)?;
            if let Some(s) = steps {
                sc.steps = s;
            }
            let (ctrls, reports) = sc.controllers()?;
            let traj = sc.run(&ctrls)?;
            traj.write_csv(BufWriter::new(File::create(&out)?))?;
            let partial = reports.iter().any(|r| !r.completed);
            match traj.status {
                SimulationStatus::Completed => {
                    eprintln!(
                        "{} steps, phases {:?}, min margin {:.4}, max eval time {:.2e} s",
                        traj.records.len(),
                        traj.phases_visited(),
                        traj.min_margin(),
                        traj.max_eval_time()
                    );
                    Ok(if partial { EXIT_PARTIAL } else { 0 })
                }
                SimulationStatus::Aborted { step, phase, infeasible } => {
                    eprintln!("stopped at step {step} in phase {phase}");
                    Ok(if infeasible { EXIT_INFEASIBLE } else { EXIT_PARTIAL })
                }
            }
        }
        Command::Bench { config, out, table } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg: BenchConfig = serde_json::from_str(&text).map_err(|e| Error::Config {
                path: config.display().to_string(),
                msg: e.to_string(),
            })?;
            let report = run_bench(&cfg)?;
            report.write_csv(BufWriter::new(File::create(&out)?))?;
            match table {
                Some(path) => report.write_completion_table(BufWriter::new(File::create(path)?))?,
                None => report.write_completion_table(std::io::stdout())?,
            }
            Ok(0)
        }
        Command::Residual { game, map, x } => {
            let spec = read_game(&game)?;
            let avi = condense_auto(&spec)?;
            let map = ExplicitMap::load(&map)?;
            if map.provenance != avi.digest() {
                bail!("map was not built from this game");
            }
            let x = parse_state(&x)?;
            match map.evaluate(&x)? {
                Evaluation::Solution { u, .. } => {
                    println!("{:e}", natural_residual(&avi, &u, &x)?);
                    Ok(0)
                }
                other => Ok(print_evaluation(&other)),
            }
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Infeasible | Error::EmptySet) => EXIT_INFEASIBLE,
        Some(
            Error::Config { .. }
            | Error::InvalidGame(_)
            | Error::Json(_)
            | Error::Format(_)
            | Error::Dimension(_)
            | Error::AssumptionViolated { .. },
        ) => EXIT_CONFIG,
        _ => EXIT_OTHER,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
