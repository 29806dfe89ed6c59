//! Two-vehicle overtake on a two-lane road, split into five phase games.
//!
//! Joint state `x = (v₁, l₁, p₂ − p₁, v₂, l₂)`, inputs `u_i = (a_i, α_i)`.
//! Each vehicle is a unicycle linearized at its phase's nominal speed, so
//! the lateral update is `l⁺ = l + Δt·V·α`. Vehicle 1 leads; vehicle 2
//! overtakes on the lane with the smaller lateral coordinate.
//!
//! Every phase game lives in coordinates shifted by the phase reference.
//! When the reference speeds differ the gap keeps changing, which enters
//! the shifted dynamics as a constant drift on the gap.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::{explore, ExplorationReport, ExplorerConfig};
use crate::game::{validate_game, condense, GameSpec, Mode, ParamBox};
use crate::mpc::{simulate, FeedbackLaw, PhaseController, PhaseMachine, Plant, Trajectory};

pub const PHASE_NAMES: [&str; 5] = ["platooning", "initiate", "perform", "complete", "clear"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    #[serde(rename = "_comment", default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub speed: f64,
    pub lane: f64,
    pub gap: f64,
    pub accel: f64,
    pub steer: f64,
    /// Weight on states an agent does not care about, keeping `Q_i` definite.
    pub regularization: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(rename = "_comment", default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    /// Forward switches on `Δp = p₁ − p₂`, in phase order.
    pub initiate: f64,
    pub perform: f64,
    pub complete: f64,
    pub clear: f64,
    /// Backward switches need `Δp` above the threshold by this many `d_min`.
    pub hysteresis: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputBounds {
    pub accel: f64,
    pub steer: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBox {
    #[serde(rename = "_comment", default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OvertakeConfig {
    #[serde(rename = "_comment", default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub dt: f64,
    pub horizon: usize,
    pub speed_lead: f64,
    pub speed_overtake: f64,
    pub lane_right: f64,
    pub lane_left: f64,
    pub d_ref: f64,
    pub d_min: f64,
    pub gamma: f64,
    pub weights: Weights,
    pub thresholds: Thresholds,
    /// Admissible states in plant coordinates.
    pub state_box: StateBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_bounds: Option<InputBounds>,
    pub x_init: Vec<f64>,
    pub steps: usize,
    #[serde(default)]
    pub explorer: ExplorerConfig,
}

impl OvertakeConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config {
            path: format!("line {} column {}", e.line(), e.column()),
            msg: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<()> {
        let bad = |path: &str, msg: &str| {
            Err(Error::Config { path: path.to_string(), msg: msg.to_string() })
        };
        if !(self.dt > 0.0) {
            return bad("dt", "must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1");
        }
        if !(self.d_min > 0.0) {
            return bad("d_min", "must be positive");
        }
        if !(self.gamma > 0.0) {
            return bad("gamma", "must be positive");
        }
        if !(self.lane_left < self.lane_right) {
            return bad("lane_left", "overtake lane must have the smaller lateral coordinate");
        }
        let w = &self.weights;
        for (name, v) in [
            ("weights.speed", w.speed),
            ("weights.lane", w.lane),
            ("weights.gap", w.gap),
            ("weights.accel", w.accel),
            ("weights.steer", w.steer),
            ("weights.regularization", w.regularization),
        ] {
            if !(v > 0.0) {
                return bad(name, "must be positive");
            }
        }
        let t = &self.thresholds;
        if !(t.initiate > t.perform && t.perform > t.complete && t.complete > t.clear) {
            return bad("thresholds", "forward thresholds must be strictly decreasing");
        }
        if t.hysteresis < 0.0 {
            return bad("thresholds.hysteresis", "must be nonnegative");
        }
        if self.state_box.lo.len() != 5 || self.state_box.hi.len() != 5 {
            return bad("state_box", "needs five entries per bound");
        }
        if self.state_box.lo.iter().zip(&self.state_box.hi).any(|(l, h)| !(l < h)) {
            return bad("state_box", "lo must be below hi");
        }
        if self.x_init.len() != 5 {
            return bad("x_init", "needs five entries");
        }
        if let Some(b) = &self.input_bounds {
            if !(b.accel > 0.0 && b.steer > 0.0) {
                return bad("input_bounds", "bounds must be positive");
            }
        }
        Ok(())
    }
}

/// One phase game in shifted coordinates plus its plant-side data.
#[derive(Debug, Clone)]
pub struct Phase {
    pub name: String,
    pub spec: GameSpec,
    /// Phase reference; the game state is `x − reference`.
    pub reference: DVector<f64>,
    pub plant: Plant,
    /// Safety rows `D x ≤ d` in plant coordinates.
    pub stage_d: DMatrix<f64>,
    pub d: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct OvertakeScenario {
    pub phases: Vec<Phase>,
    pub fsm: PhaseMachine,
    pub x_init: DVector<f64>,
    pub steps: usize,
    pub explorer: ExplorerConfig,
}

/// Safety row of each phase in plant coordinates: `row · x ≤ −d_min`.
fn safety_row(phase: usize, gamma: f64) -> Option<[f64; 5]> {
    match phase {
        // p₁ − p₂ ≥ d_min
        0 => Some([0.0, 0.0, 1.0, 0.0, 0.0]),
        // p₂ − p₁ ≤ −γ(l₂ − l₁) − d_min
        1 => Some([0.0, -gamma, 1.0, 0.0, gamma]),
        // l₁ − l₂ ≥ d_min
        2 => Some([0.0, -1.0, 0.0, 0.0, 1.0]),
        // p₂ − p₁ ≥ γ(l₂ − l₁) + d_min
        3 => Some([0.0, -gamma, -1.0, 0.0, gamma]),
        _ => None,
    }
}

pub fn build_overtake_scenario(cfg: &OvertakeConfig) -> Result<OvertakeScenario> {
    cfg.check()?;
    let dt = cfg.dt;
    let w = &cfg.weights;
    let eps = w.regularization;
    let mut a = DMatrix::identity(5, 5);
    a[(2, 0)] = -dt;
    a[(2, 3)] = dt;

    let mut phases = Vec::with_capacity(5);
    for (k, name) in PHASE_NAMES.iter().enumerate() {
        let platooning = k == 0;
        let v2 = if platooning { cfg.speed_lead } else { cfg.speed_overtake };
        let l2 = if k <= 2 && !platooning { cfg.lane_left } else { cfg.lane_right };
        let gap = if platooning { cfg.d_ref } else { 0.0 };
        let reference = DVector::from_row_slice(&[cfg.speed_lead, cfg.lane_right, gap, v2, l2]);

        let mut b1 = DMatrix::zeros(5, 2);
        b1[(0, 0)] = dt;
        b1[(1, 1)] = dt * cfg.speed_lead;
        let mut b2 = DMatrix::zeros(5, 2);
        b2[(3, 0)] = dt;
        b2[(4, 1)] = dt * v2;

        let q1 = DMatrix::from_diagonal(&DVector::from_row_slice(&[w.speed, w.lane, eps, eps, eps]));
        let q2 = DMatrix::from_diagonal(&DVector::from_row_slice(&[
            eps,
            eps,
            if platooning { w.gap } else { eps },
            w.speed,
            w.lane,
        ]));
        let r = DMatrix::from_diagonal(&DVector::from_row_slice(&[w.accel, w.steer]));

        let (stage_d, d) = match safety_row(k, cfg.gamma) {
            Some(row) => (DMatrix::from_row_slice(1, 5, &row), DVector::from_element(1, -cfg.d_min)),
            None => (DMatrix::zeros(0, 5), DVector::zeros(0)),
        };
        let shifted_d = &d - &stage_d * &reference;

        let lo: Vec<f64> = cfg.state_box.lo.iter().zip(reference.iter()).map(|(v, r)| v - r).collect();
        let hi: Vec<f64> = cfg.state_box.hi.iter().zip(reference.iter()).map(|(v, r)| v - r).collect();

        let (stage_g, g) = match &cfg.input_bounds {
            Some(bnd) => {
                let mut g1 = DMatrix::zeros(8, 2);
                let mut g2 = DMatrix::zeros(8, 2);
                for j in 0..2 {
                    g1[(2 * j, j)] = 1.0;
                    g1[(2 * j + 1, j)] = -1.0;
                    g2[(4 + 2 * j, j)] = 1.0;
                    g2[(4 + 2 * j + 1, j)] = -1.0;
                }
                let one = [bnd.accel, bnd.accel, bnd.steer, bnd.steer];
                let g: Vec<f64> = one.iter().chain(one.iter()).copied().collect();
                (vec![g1, g2], DVector::from_vec(g))
            }
            None => (vec![DMatrix::zeros(0, 2), DMatrix::zeros(0, 2)], DVector::zeros(0)),
        };

        // x_ref is not a fixed point when the speeds differ: A x_ref − x_ref
        let drift = &a * &reference - &reference;
        let spec = GameSpec {
            a: a.clone(),
            b: vec![b1.clone(), b2.clone()],
            q: vec![q1, q2],
            r: vec![r.clone(), r],
            stage_d: stage_d.clone(),
            d: shifted_d,
            stage_g,
            g,
            horizon: cfg.horizon,
            x_box: ParamBox::new(lo, hi),
            mode: Mode::FiniteHorizon,
            drift,
            constrain_x0: false,
        };
        let report = validate_game(&spec);
        if !report.is_empty() {
            return Err(Error::Config { path: format!("phase {name}"), msg: report.join("; ") });
        }
        phases.push(Phase {
            name: name.to_string(),
            spec,
            reference,
            plant: Plant { a: a.clone(), b: vec![b1, b2] },
            stage_d,
            d,
        });
    }

    let t = &cfg.thresholds;
    Ok(OvertakeScenario {
        phases,
        fsm: PhaseMachine {
            signal: vec![0.0, 0.0, -1.0, 0.0, 0.0],
            forward: vec![t.initiate, t.perform, t.complete, t.clear],
            hysteresis: t.hysteresis * cfg.d_min,
        },
        x_init: DVector::from_vec(cfg.x_init.clone()),
        steps: cfg.steps,
        explorer: cfg.explorer.clone(),
    })
}

impl OvertakeScenario {
    /// Explicit maps for all phases.
    pub fn controllers(&self) -> Result<(Vec<PhaseController>, Vec<ExplorationReport>)> {
        let mut out = Vec::with_capacity(self.phases.len());
        let mut reports = Vec::with_capacity(self.phases.len());
        for ph in &self.phases {
            let avi = condense(&ph.spec)?;
            let (map, report) = explore(&avi, &self.explorer)?;
            log::info!(
                "phase {}: {} pieces, completed {} in {:.2}s",
                ph.name,
                map.len(),
                report.completed,
                report.wall_time
            );
            out.push(PhaseController {
                name: ph.name.clone(),
                law: FeedbackLaw::new(map),
                plant: ph.plant.clone(),
                offset: ph.reference.clone(),
                stage_d: ph.stage_d.clone(),
                d: ph.d.clone(),
            });
            reports.push(report);
        }
        Ok((out, reports))
    }

    pub fn run(&self, controllers: &[PhaseController]) -> Result<Trajectory> {
        simulate(controllers, &self.x_init, self.steps, Some(&self.fsm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> OvertakeConfig {
        OvertakeConfig::from_json(include_str!("../fixtures/overtake.json")).unwrap()
    }

    #[test]
    fn safety_rows_match_the_phase_table() {
        let sc = build_overtake_scenario(&config()).unwrap();
        let cfg = config();
        // x = (v₁, l₁, p₂ − p₁, v₂, l₂)
        let x = DVector::from_row_slice(&[20.0, 0.0, -5.0, 22.0, -3.0]);
        let (p21, l1, l2) = (x[2], x[1], x[4]);
        let lhs = |k: usize| (&sc.phases[k].stage_d * &x)[0];
        assert_eq!(lhs(0), p21);
        assert!((lhs(1) - (p21 + cfg.gamma * (l2 - l1))).abs() < 1e-12);
        assert_eq!(lhs(2), l2 - l1);
        assert!((lhs(3) - (-p21 + cfg.gamma * (l2 - l1))).abs() < 1e-12);
        assert_eq!(sc.phases[4].stage_d.nrows(), 0);
        for k in 0..4 {
            assert_eq!(sc.phases[k].d[0], -cfg.d_min);
        }
    }

    #[test]
    fn shifted_cost_matches_tracking_cost() {
        let cfg = config();
        let sc = build_overtake_scenario(&cfg).unwrap();
        let w = &cfg.weights;
        for (k, ph) in sc.phases.iter().enumerate() {
            let avi = condense(&ph.spec).unwrap();
            let nu = avi.n_inputs();
            for trial in 0..5 {
                let x0 = DVector::from_fn(5, |i, _| ph.reference[i] + ((i + trial) as f64 * 0.7).sin());
                let u = DVector::from_fn(nu, |i, _| ((i * 3 + trial) as f64 * 0.37).cos() * 0.2);
                // plant-coordinate rollout of the same inputs
                let mut x = x0.clone();
                let mut cost = [0.0, 0.0];
                for t in 0..cfg.horizon {
                    let ui: Vec<DVector<f64>> = avi
                        .agents
                        .iter()
                        .map(|b| u.rows(b.stage(t).start, b.m).into_owned())
                        .collect();
                    x = ph.plant.step(&x, &ui);
                    let e = &x - &ph.reference;
                    let reg = |idx: &[usize]| idx.iter().map(|&i| e[i] * e[i]).sum::<f64>() * w.regularization;
                    let gap_term = if k == 0 { w.gap * e[2] * e[2] } else { reg(&[2]) };
                    cost[0] += 0.5 * (w.speed * e[0] * e[0] + w.lane * e[1] * e[1] + reg(&[2, 3, 4]));
                    cost[1] += 0.5 * (w.speed * e[3] * e[3] + w.lane * e[4] * e[4] + gap_term + reg(&[0, 1]));
                    for (i, uu) in ui.iter().enumerate() {
                        cost[i] += 0.5 * (w.accel * uu[0] * uu[0] + w.steer * uu[1] * uu[1]);
                    }
                }
                let shifted = &x0 - &ph.reference;
                for i in 0..2 {
                    let j = avi.agent_cost(i, &u, &shifted);
                    assert!((j - cost[i]).abs() <= 1e-9 * (1.0 + cost[i]), "{} agent {i}: {j} vs {}", ph.name, cost[i]);
                }
            }
        }
    }

    #[test]
    fn maneuver_completes_safely() {
        let sc = build_overtake_scenario(&config()).unwrap();
        let (ctrls, reports) = sc.controllers().unwrap();
        assert!(reports.iter().all(|r| r.completed));
        let traj = sc.run(&ctrls).unwrap();
        assert_eq!(traj.status, crate::mpc::SimulationStatus::Completed);
        assert_eq!(traj.phases_visited(), vec![0, 1, 2, 3, 4]);
        assert!(traj.min_margin() >= 0.0);
    }

    #[test]
    fn bad_config_names_the_field() {
        let mut cfg = config();
        cfg.d_min = -1.0;
        match build_overtake_scenario(&cfg) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "d_min"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(OvertakeConfig::from_json("{\"dt\": 0.1}"), Err(Error::Config { .. })));
    }
}
