use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::action::{choose_insertion_time, line_search_duration, SacAction, SacParams};
use super::rollout::{backward_costate, rollout};
use super::schedule::{ControlSchedule, Nominal, Segment};
use crate::error::{Error, Result};
use crate::models::{HybridState, Plant};
use crate::objective::QuadraticLieCost;

/// When the weight perturbation is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    Off,
    Always,
    /// For `interval_steps` steps after the action collapses onto the nominal
    /// control while the stage cost is above a threshold.
    #[default]
    WhenStuck,
}

/// What produced the applied control.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerMode {
    Sac,
    Lqr,
    Nominal,
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerMode::Sac => "SAC",
            ControllerMode::Lqr => "LQR",
            ControllerMode::Nominal => "nominal",
        })
    }
}

/// Everything a step decided, for logging and replay.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub t: f64,
    pub mode: ControllerMode,
    /// Horizon cost under the schedule held at the start of the step.
    pub j1: f64,
    pub predicted_mig: f64,
    pub tau0: f64,
    pub lambda: f64,
    /// New action, if one was accepted this step.
    pub action: Option<SacAction>,
    /// Held actions ahead of `t`, included in the `j1` rollout.
    pub held: Vec<Segment>,
    /// Perturbation block used for `M`, if perturbed.
    pub weight_block: Option<u64>,
    /// Held actions inside `[t, t + dt)`, overriding the nominal there.
    pub committed: Vec<Segment>,
}

/// Sequential action controller.
///
/// Accepted actions are held until their window has passed; a newer action
/// overrides the part of the held schedule it covers.
#[derive(Clone, Debug)]
pub struct SacController {
    plant: Arc<dyn Plant>,
    cost: QuadraticLieCost,
    params: SacParams,
    nominal: Nominal,
    feedback_dt: f64,
    perturb_mode: PerturbMode,
    stuck_cost: f64,
    held: Vec<Segment>,
    step_index: u64,
    perturb_until: u64,
}

impl SacController {
    pub fn new(
        plant: Arc<dyn Plant>,
        cost: QuadraticLieCost,
        params: SacParams,
        nominal: Nominal,
        feedback_dt: f64,
    ) -> Result<Self> {
        params.validate(plant.u_dim())?;
        if cost.kind() != plant.kind() {
            return Err(Error::InvalidConfig("cost and plant live on different groups".into()));
        }
        if !(feedback_dt > 0.0) {
            return Err(Error::InvalidConfig("feedback period must be positive".into()));
        }
        if params.t_calc < feedback_dt - 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "t_calc ({}) must be at least the feedback period ({feedback_dt})",
                params.t_calc
            )));
        }
        Ok(Self {
            plant,
            cost,
            params,
            nominal,
            feedback_dt,
            perturb_mode: PerturbMode::Off,
            stuck_cost: 0.0,
            held: Vec::new(),
            step_index: 0,
            perturb_until: 0,
        })
    }

    /// Enables weight perturbation in the given mode; `stuck_cost` is the
    /// stage-cost threshold for [`PerturbMode::WhenStuck`].
    pub fn with_perturbation(mut self, mode: PerturbMode, stuck_cost: f64) -> Self {
        self.perturb_mode = mode;
        self.stuck_cost = stuck_cost;
        self
    }

    pub fn params(&self) -> &SacParams {
        &self.params
    }

    pub fn cost(&self) -> &QuadraticLieCost {
        &self.cost
    }

    pub fn plant(&self) -> &Arc<dyn Plant> {
        &self.plant
    }

    pub fn nominal(&self) -> &Nominal {
        &self.nominal
    }

    pub fn feedback_dt(&self) -> f64 {
        self.feedback_dt
    }

    pub fn held(&self) -> &[Segment] {
        &self.held
    }

    /// Drops all held actions (used when another controller takes over).
    pub fn clear(&mut self) {
        self.held.clear();
    }

    /// Schedule that applies `segments` over the nominal.
    pub fn schedule_with(&self, segments: &[Segment]) -> ControlSchedule {
        segments.iter().fold(ControlSchedule::new(self.nominal.clone()), |s, seg| s.with(seg.clone()))
    }

    /// Block index of the weight used at `step`, if perturbed.
    pub fn weight_block(&self, step: u64) -> Option<u64> {
        let p = self.cost.perturbation();
        let on = match self.perturb_mode {
            PerturbMode::Off => false,
            PerturbMode::Always => true,
            PerturbMode::WhenStuck => step < self.perturb_until,
        };
        (on && p.epsilon > 0.0).then(|| step / p.interval_steps)
    }

    /// Cost with the weight for a given perturbation block.
    pub fn cost_for_block(&self, block: Option<u64>) -> QuadraticLieCost {
        match block {
            Some(b) => {
                let p = self.cost.perturbation();
                self.cost.with_weight(self.cost.perturb_weights(b * p.interval_steps))
            }
            None => self.cost.clone(),
        }
    }

    /// One feedback cycle at measured state `s`, time `t`. Returns the record;
    /// the control for `[t, t + dt)` is `schedule_with(&record.committed)`.
    pub fn step(&mut self, s: &HybridState, t: f64) -> Result<StepRecord> {
        let dt = self.feedback_dt;
        self.held.retain(|seg| seg.end > t);
        let committed: Vec<Segment> = self.held.iter().filter_map(|p| p.clip(t, t + dt)).collect();
        let block = self.weight_block(self.step_index);
        let mut rec = StepRecord {
            t,
            mode: if committed.is_empty() { ControllerMode::Nominal } else { ControllerMode::Sac },
            j1: f64::NAN,
            predicted_mig: f64::NAN,
            tau0: f64::NAN,
            lambda: 0.0,
            action: None,
            held: self.held.clone(),
            weight_block: block,
            committed,
        };
        match self.plan(s, t, block, &mut rec) {
            Ok(()) | Err(Error::BranchCut { .. }) | Err(Error::Singularity { .. }) => {}
            Err(e) => return Err(e),
        }
        if let Some(a) = &rec.action {
            let held = self.schedule_with(&self.held).with(Segment::new(a.tau0, a.tau0 + a.lambda, a.u2.clone()));
            self.held = held.segments().to_vec();
        }
        self.step_index += 1;
        Ok(rec)
    }

    fn plan(&mut self, s: &HybridState, t: f64, block: Option<u64>, rec: &mut StepRecord) -> Result<()> {
        let plant = self.plant.as_ref();
        let p = &self.params;
        let cost = self.cost_for_block(block);
        let held = self.schedule_with(&self.held);
        let traj = rollout(plant, s, t, p.horizon, &held, p.sample_dt)?;
        let j1 = cost.total_objective(&traj)?;
        rec.j1 = j1;
        let rho = backward_costate(plant, &cost, &traj, &held)?;
        let scan = choose_insertion_time(plant, &traj, &rho, &held, p, t, p.alpha_d(j1))?;
        if self.perturb_mode == PerturbMode::WhenStuck
            && scan.max_deviation < 1e-6
            && self.step_index >= self.perturb_until
            && cost.stage_cost(s, t)? > self.stuck_cost
        {
            self.perturb_until = self.step_index + 1 + self.cost.perturbation().interval_steps;
        }
        let Some(mut action) = scan.best else {
            return Ok(());
        };
        rec.predicted_mig = action.predicted_mig;
        rec.tau0 = action.tau0;
        let (lambda, _) = line_search_duration(plant, &cost, s, t, &held, j1, &action, p)?;
        if lambda > 0.0 {
            action.lambda = lambda;
            rec.lambda = lambda;
            rec.action = Some(action);
        }
        Ok(())
    }

    /// The control this controller applies at `t` given a committed segment.
    pub fn applied(&self, committed: &[Segment], t: f64) -> Result<DVector<f64>> {
        self.schedule_with(committed).at(t)
    }
}
