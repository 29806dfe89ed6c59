//! Receding-horizon closed loop driven by explicit equilibrium maps.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{Evaluation, ExplicitMap};

/// First-stage input selection `κ(x) = Ξ 𝓢(x)`.
#[derive(Debug, Clone)]
pub struct FeedbackLaw {
    pub map: ExplicitMap,
    /// Stacked-input rows of each agent's first-stage input, agent by agent.
    pub xi: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    /// First-stage inputs grouped per agent.
    Inputs(Vec<DVector<f64>>),
    Infeasible,
    Uncovered,
}

impl Feedback {
    /// All agents' inputs stacked in agent order.
    pub fn stacked(&self) -> Option<DVector<f64>> {
        match self {
            Feedback::Inputs(parts) => {
                let all: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
                Some(DVector::from_vec(all))
            }
            _ => None,
        }
    }
}

impl FeedbackLaw {
    pub fn new(map: ExplicitMap) -> Self {
        let xi = map
            .agents
            .iter()
            .flat_map(|a| a.offset..a.offset + a.m)
            .collect();
        Self { map, xi }
    }

    pub fn feedback(&self, x: &DVector<f64>) -> Result<Feedback> {
        Ok(match self.map.evaluate(x)? {
            Evaluation::Solution { u, .. } => Feedback::Inputs(
                self.map
                    .agents
                    .iter()
                    .map(|a| u.rows(a.offset, a.m).into_owned())
                    .collect(),
            ),
            Evaluation::Infeasible => Feedback::Infeasible,
            Evaluation::Uncovered => Feedback::Uncovered,
        })
    }
}

/// True plant `x⁺ = A x + Σ_i B_i u_i`.
#[derive(Debug, Clone)]
pub struct Plant {
    pub a: DMatrix<f64>,
    pub b: Vec<DMatrix<f64>>,
}

impl Plant {
    pub fn step(&self, x: &DVector<f64>, inputs: &[DVector<f64>]) -> DVector<f64> {
        let mut next = &self.a * x;
        for (b, u) in self.b.iter().zip(inputs) {
            next += b * u;
        }
        next
    }
}

/// A law acting in coordinates shifted by `offset`, the plant model it was
/// designed for, and the stage constraints `D x ≤ d` it is meant to enforce
/// (plant coordinates).
#[derive(Debug, Clone)]
pub struct PhaseController {
    pub name: String,
    pub law: FeedbackLaw,
    pub plant: Plant,
    pub offset: DVector<f64>,
    pub stage_d: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl PhaseController {
    /// Controller in plant coordinates with no stage constraints to monitor.
    pub fn plain(name: &str, law: FeedbackLaw, plant: Plant) -> Self {
        let n = law.map.dims.n;
        Self {
            name: name.to_string(),
            law,
            plant,
            offset: DVector::zeros(n),
            stage_d: DMatrix::zeros(0, n),
            d: DVector::zeros(0),
        }
    }

    /// `min(d − D x)`, or `+∞` without constraints.
    pub fn margin(&self, x: &DVector<f64>) -> f64 {
        (&self.d - &self.stage_d * x)
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Phase switching on a scalar signal `s = cᵀ x`.
///
/// Phase `k` advances to `k + 1` when `s < forward[k]` and falls back to
/// `k − 1` when `s > forward[k − 1] + hysteresis`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseMachine {
    pub signal: Vec<f64>,
    pub forward: Vec<f64>,
    pub hysteresis: f64,
}

impl PhaseMachine {
    pub fn signal_value(&self, x: &DVector<f64>) -> f64 {
        self.signal.iter().zip(x.iter()).map(|(c, v)| c * v).sum()
    }

    /// At most one transition per call.
    pub fn next_phase(&self, phase: usize, s: f64) -> usize {
        if phase < self.forward.len() && s < self.forward[phase] {
            phase + 1
        } else if phase > 0 && s > self.forward[phase - 1] + self.hysteresis {
            phase - 1
        } else {
            phase
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub phase: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub eval_time_s: f64,
    pub min_constraint_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimulationStatus {
    Completed,
    /// No equilibrium input at `step`: the state was infeasible, or outside
    /// the map's coverage when `infeasible` is false.
    Aborted { step: usize, phase: String, infeasible: bool },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub phase_names: Vec<String>,
    pub final_state: DVector<f64>,
    pub status: SimulationStatus,
}

impl Trajectory {
    pub fn phases_visited(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.phase) {
                out.push(r.phase);
            }
        }
        out
    }

    pub fn min_margin(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.min_constraint_margin)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eval_time(&self) -> f64 {
        self.records.iter().map(|r| r.eval_time_s).fold(0.0, f64::max)
    }

    /// CSV with columns `t, phase, x…, u…, eval_time_s, min_constraint_margin`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.final_state.len();
        let nu = self.records.first().map_or(0, |r| r.u.len());
        let mut header = vec!["t".to_string(), "phase".to_string()];
        header.extend((0..n).map(|k| format!("x{k}")));
        header.extend((0..nu).map(|k| format!("u{k}")));
        header.push("eval_time_s".into());
        header.push("min_constraint_margin".into());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.t.to_string(), self.phase_names[r.phase].clone()];
            row.extend(r.x.iter().map(|v| v.to_string()));
            row.extend(r.u.iter().map(|v| v.to_string()));
            row.push(r.eval_time_s.to_string());
            row.push(r.min_constraint_margin.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run the closed loop for `steps` steps from `x_init`, starting in phase 0,
/// propagating each step with the active phase's plant.
///
/// With a phase machine the phase is updated from the current state before
/// each step; without one, phase 0 is used throughout. Infeasible or
/// uncovered states stop the run and keep the partial trajectory.
pub fn simulate(
    controllers: &[PhaseController],
    x_init: &DVector<f64>,
    steps: usize,
    fsm: Option<&PhaseMachine>,
) -> Result<Trajectory> {
    if controllers.is_empty() {
        return Err(Error::Dimension("no controllers".into()));
    }
    if let Some(m) = fsm {
        if m.forward.len() + 1 != controllers.len() {
            return Err(Error::Dimension(format!(
                "{} thresholds for {} phases",
                m.forward.len(),
                controllers.len()
            )));
        }
    }
    let mut x = x_init.clone();
    let mut phase = 0;
    let mut records = Vec::with_capacity(steps);
    let mut status = SimulationStatus::Completed;
    for t in 0..steps {
        if let Some(m) = fsm {
            if t > 0 {
                phase = m.next_phase(phase, m.signal_value(&x));
            }
        }
        let ctrl = &controllers[phase];
        let shifted = &x - &ctrl.offset;
        let clock = Instant::now();
        let fb = ctrl.law.feedback(&shifted)?;
        let eval_time_s = clock.elapsed().as_secs_f64();
        let Feedback::Inputs(inputs) = &fb else {
            let infeasible = fb == Feedback::Infeasible;
            let what = if infeasible { "infeasible" } else { "uncovered" };
            log::warn!("step {t}: state {:?} is {what} in phase {}", x.as_slice(), ctrl.name);
            status = SimulationStatus::Aborted { step: t, phase: ctrl.name.clone(), infeasible };
            break;
        };
        records.push(StepRecord {
            t,
            phase,
            x: x.clone(),
            u: fb.stacked().expect("inputs"),
            eval_time_s,
            min_constraint_margin: ctrl.margin(&x),
        });
        x = ctrl.plant.step(&x, inputs);
    }
    Ok(Trajectory {
        records,
        phase_names: controllers.iter().map(|c| c.name.clone()).collect(),
        final_state: x,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explorer::{explore, ExplorerConfig};
    use crate::game::{condense, GameSpec, ParamBox};

    fn scalar_law(a: f64) -> (Plant, FeedbackLaw) {
        let spec = GameSpec::unconstrained(
            DMatrix::from_element(1, 1, a),
            vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 0.5)],
            vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0)],
            vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)],
            2,
            ParamBox::cube(1, 10.0),
        );
        let avi = condense(&spec).unwrap();
        let (map, _) = explore(&avi, &ExplorerConfig::default()).unwrap();
        (Plant { a: spec.a.clone(), b: spec.b.clone() }, FeedbackLaw::new(map))
    }

    #[test]
    fn selection_picks_first_stage_of_each_agent() {
        let (_, law) = scalar_law(0.9);
        assert_eq!(law.xi, vec![0, 2]);
        let x = DVector::from_element(1, 1.0);
        let u = law.map.evaluate(&x).unwrap();
        let u = u.solution().unwrap();
        let fb = law.feedback(&x).unwrap();
        assert_eq!(fb.stacked().unwrap(), DVector::from_row_slice(&[u[0], u[2]]));
    }

    #[test]
    fn zero_state_stays_at_rest() {
        let (plant, law) = scalar_law(1.1);
        let ctrl = [PhaseController::plain("only", law, plant)];
        let traj = simulate(&ctrl, &DVector::zeros(1), 20, None).unwrap();
        assert_eq!(traj.status, SimulationStatus::Completed);
        assert!(traj.records.iter().all(|r| r.x[0] == 0.0 && r.u.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn leaving_the_box_aborts() {
        let (plant, law) = scalar_law(3.0);
        // inputs have no effect, so the state escapes the box
        let plant = Plant { a: plant.a, b: vec![plant.b[0].clone() * 0.0, plant.b[1].clone() * 0.0] };
        let weak = PhaseController::plain("only", law, plant);
        let traj = simulate(&[weak], &DVector::from_element(1, 1.0), 10, None).unwrap();
        assert!(matches!(traj.status, SimulationStatus::Aborted { step: 3, infeasible: false, .. }));
        assert_eq!(traj.records.len(), 3);
    }

    #[test]
    fn phase_machine_moves_one_step_at_a_time() {
        let m = PhaseMachine { signal: vec![1.0], forward: vec![10.0, 0.0, -5.0], hysteresis: 0.5 };
        assert_eq!(m.next_phase(0, -100.0), 1);
        assert_eq!(m.next_phase(1, 10.2), 1);
        assert_eq!(m.next_phase(1, 10.6), 0);
        assert_eq!(m.next_phase(3, -100.0), 3);
        assert_eq!(m.next_phase(2, -4.0), 2);
    }

    #[test]
    fn csv_has_expected_columns() {
        let (plant, law) = scalar_law(0.9);
        let ctrl = [PhaseController::plain("only", law, plant)];
        let traj = simulate(&ctrl, &DVector::from_element(1, 2.0), 3, None).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,phase,x0,u0,u1,eval_time_s,min_constraint_margin");
        assert_eq!(lines.count(), 3);
        assert!(text.contains(",inf"));
    }
}
