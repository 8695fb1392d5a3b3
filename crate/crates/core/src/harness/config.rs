//! JSON scenario schema and its translation into plants, costs and controllers.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{GroupElement, GroupKind};
use crate::models::{
    FixedTarget, FlatReference, HybridState, KinematicCar, PlantModel, PointMass, Quadrotor, Reference, SinusoidOutputs,
};
use crate::objective::{QuadraticLieCost, WeightPerturbation};
use crate::sac::{LqrEndgame, Nominal, PerturbMode, SacController, SacParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    Car { u_min: Vec<f64>, u_max: Vec<f64>, steer_limit: f64 },
    Quadrotor { mass: f64, inertia: [f64; 3], kt: f64, km: f64, arm: f64, w_max: f64 },
    PointMass { group: GroupKind, damping: f64, u_min: Vec<f64>, u_max: Vec<f64> },
}

impl PlantConfig {
    pub fn build(&self) -> Result<PlantModel> {
        Ok(match self {
            PlantConfig::Car { u_min, u_max, steer_limit } => PlantModel::Car(KinematicCar::new(
                DVector::from_column_slice(u_min),
                DVector::from_column_slice(u_max),
                *steer_limit,
            )?),
            PlantConfig::Quadrotor { mass, inertia, kt, km, arm, w_max } => {
                PlantModel::Quadrotor(Quadrotor::new(*mass, Vector3::from(*inertia), *kt, *km, *arm, *w_max)?)
            }
            PlantConfig::PointMass { group, damping, u_min, u_max } => PlantModel::PointMass(
                PointMass::new(*group, *damping)?
                    .with_bounds(DVector::from_column_slice(u_min), DVector::from_column_slice(u_max))?,
            ),
        })
    }
}

/// A pose in human-friendly coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Pose {
    /// Heading and position.
    Se2 { theta: f64, x: f64, y: f64 },
    /// Yaw, pitch, roll (R = Rz Ry Rx) and position.
    Se3 { yaw_pitch_roll: [f64; 3], position: [f64; 3] },
}

impl Pose {
    pub fn to_group(&self) -> GroupElement {
        match self {
            Pose::Se2 { theta, x, y } => GroupElement::se2(*theta, *x, *y),
            Pose::Se3 { yaw_pitch_roll: [y, p, r], position } => {
                let rot = Rotation3::from_euler_angles(*r, *p, *y);
                let m: Matrix3<f64> = rot.into_inner();
                GroupElement::se3(&m, &Vector3::from(*position))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub pose: Pose,
    pub z: Vec<f64>,
}

impl StateConfig {
    pub fn build(&self) -> HybridState {
        HybridState::new(self.pose.to_group(), DVector::from_column_slice(&self.z))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    Fixed {
        state: StateConfig,
        u_ff: Vec<f64>,
    },
    /// Flatness-based quadrotor reference; defaults to the sinusoidal outputs.
    Flatness {
        #[serde(default)]
        outputs: Option<SinusoidOutputs>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    /// Full group weight; overrides `m_diag` when present.
    #[serde(default)]
    pub m: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub m_diag: Option<Vec<f64>>,
    pub q_z_diag: Vec<f64>,
    pub p_terminal_diag: Vec<f64>,
    #[serde(default)]
    pub perturbation: Option<PerturbationConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    #[serde(default)]
    pub mode: PerturbMode,
    pub epsilon: f64,
    pub interval_steps: u64,
    /// Stage cost above which a collapsed action counts as stuck.
    #[serde(default)]
    pub stuck_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrConfig {
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub linearization: LqrLinearization,
}

/// Operating point of the LQR gains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LqrLinearization {
    /// One gain about hover.
    #[default]
    Hover,
    /// Gain re-solved about the reference at every step.
    Frozen,
}

fn default_threshold() -> f64 {
    36.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub duration: f64,
    pub feedback_hz: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Stop the run at the first step inside the success region.
    #[serde(default)]
    pub stop_on_success: bool,
}

fn default_substeps() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SuccessConfig {
    /// `|theta| <= heading`, `|(x, y)| <= position`, `|v| <= speed`, relative to the origin.
    CarRegion { heading: f64, position: f64, speed: f64 },
    /// The LQR switching measure falls below its threshold.
    LqrRegion,
}

/// Monte Carlo sampling of initial states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingConfig {
    /// Uniform heading and position box; `z` taken from `initial`.
    CarBox { theta: [f64; 2], x: [f64; 2], y: [f64; 2] },
    /// Offset from the reference at `t = 0`: position error of uniform
    /// magnitude along a uniform direction, attitude error of uniform angle
    /// about a uniform axis; body velocities equal to the reference.
    TrackingOffset { position_error: [f64; 2], attitude_error: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub plant: PlantConfig,
    pub reference: ReferenceConfig,
    pub cost: CostConfig,
    pub sac: SacParams,
    #[serde(default)]
    pub lqr: Option<LqrConfig>,
    pub initial: StateConfig,
    #[serde(default)]
    pub sampling: Option<SamplingConfig>,
    pub sim: SimConfig,
    pub success: SuccessConfig,
    #[serde(default)]
    pub seed: u64,
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

/// Fully constructed scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub plant: PlantModel,
    pub reference: Arc<dyn Reference>,
    pub nominal: Nominal,
    pub cost: QuadraticLieCost,
    pub lqr: Option<LqrConfig>,
}

impl ScenarioConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn feedback_dt(&self) -> f64 {
        1.0 / self.sim.feedback_hz
    }

    pub fn steps(&self) -> usize {
        (self.sim.duration * self.sim.feedback_hz - 1e-9).ceil().max(0.0) as usize
    }

    pub fn build(&self) -> Result<Scenario> {
        if !(self.sim.duration >= 0.0 && self.sim.feedback_hz > 0.0 && self.sim.substeps > 0) {
            return Err(Error::InvalidConfig("sim needs duration >= 0, feedback_hz > 0, substeps > 0".into()));
        }
        let plant = self.plant.build()?;
        let p = plant.clone().into_arc();
        let (kind, zd) = (p.kind(), p.z_dim());
        let reference: Arc<dyn Reference> = match &self.reference {
            ReferenceConfig::Fixed { state, u_ff } => {
                Arc::new(FixedTarget::new(state.build(), DVector::from_column_slice(u_ff)))
            }
            ReferenceConfig::Flatness { outputs } => {
                let PlantModel::Quadrotor(q) = &plant else {
                    return Err(Error::InvalidConfig("flatness reference requires the quadrotor".into()));
                };
                Arc::new(FlatReference::new(q.clone(), outputs.clone().unwrap_or_default()))
            }
        };
        let r0 = reference.at(0.0)?;
        if r0.state.kind() != kind || r0.state.z.len() != zd || r0.u_ff.len() != p.u_dim() {
            return Err(Error::InvalidConfig("reference does not match the plant dimensions".into()));
        }
        let init = self.initial.build();
        if init.kind() != kind || init.z.len() != zd {
            return Err(Error::InvalidConfig("initial state does not match the plant".into()));
        }
        let nominal = match &self.reference {
            ReferenceConfig::Flatness { .. } => Nominal::Feedforward(reference.clone()),
            ReferenceConfig::Fixed { u_ff, .. } => Nominal::Constant(DVector::from_column_slice(u_ff)),
        };
        let cost = self.build_cost(&plant, reference.clone())?;
        if let Some(l) = &self.lqr {
            if l.q_diag.len() != kind.dim() + zd || l.r_diag.len() != p.u_dim() {
                return Err(Error::InvalidConfig("LQR weight dimensions do not match the plant".into()));
            }
        }
        if matches!(self.success, SuccessConfig::LqrRegion) && self.lqr.is_none() {
            return Err(Error::InvalidConfig("lqr_region success needs an lqr section".into()));
        }
        Ok(Scenario { config: self.clone(), plant, reference, nominal, cost, lqr: self.lqr.clone() })
    }

    fn build_cost(&self, plant: &PlantModel, reference: Arc<dyn Reference>) -> Result<QuadraticLieCost> {
        let p = plant.clone().into_arc();
        let (d, k) = (p.kind().dim(), p.z_dim());
        let c = &self.cost;
        let m = match (&c.m, &c.m_diag) {
            (Some(rows), _) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidConfig(format!("M must be {d}x{d}")));
                }
                DMatrix::from_fn(d, d, |i, j| rows[i][j])
            }
            (None, Some(v)) if v.len() == d => diag(v),
            _ => return Err(Error::InvalidConfig(format!("cost needs m or m_diag with {d} entries"))),
        };
        if c.q_z_diag.len() != k || c.p_terminal_diag.len() != d + k {
            return Err(Error::InvalidConfig(format!("q_z_diag needs {k} and p_terminal_diag {} entries", d + k)));
        }
        if matches!(plant, PlantModel::Car(_)) && (c.q_z_diag[0] != 0.0 || c.p_terminal_diag[d] != 0.0) {
            return Err(Error::InvalidConfig("car yaw rate is algebraic; its weights must be zero".into()));
        }
        let mut cost = QuadraticLieCost::new(p.kind(), reference, m, diag(&c.q_z_diag), diag(&c.p_terminal_diag))?;
        if let Some(pc) = &c.perturbation {
            cost = cost.with_perturbation(WeightPerturbation {
                epsilon: pc.epsilon,
                interval_steps: pc.interval_steps,
                seed: self.seed,
            })?;
        }
        Ok(cost)
    }
}

impl Scenario {
    /// Fresh controller; `seed` drives the weight perturbation.
    pub fn controller(&self, seed: u64) -> Result<SacController> {
        let plant = self.plant.clone().into_arc();
        let mut cost = self.cost.clone();
        if let Some(pc) = &self.config.cost.perturbation {
            cost = cost.with_perturbation(WeightPerturbation {
                epsilon: pc.epsilon,
                interval_steps: pc.interval_steps,
                seed,
            })?;
        }
        let mut sac =
            SacController::new(plant, cost, self.config.sac.clone(), self.nominal.clone(), self.config.feedback_dt())?;
        if let Some(pc) = &self.config.cost.perturbation {
            sac = sac.with_perturbation(pc.mode, pc.stuck_cost);
        }
        Ok(sac)
    }

    /// LQR endgame: about hover (identity pose, zero velocities, hover input)
    /// or frozen about the reference.
    pub fn endgame(&self) -> Result<Option<LqrEndgame>> {
        let Some(l) = &self.lqr else { return Ok(None) };
        let PlantModel::Quadrotor(q) = &self.plant else {
            return Err(Error::InvalidConfig("the LQR endgame is defined for the quadrotor".into()));
        };
        let (qw, rw, dt) = (diag(&l.q_diag), diag(&l.r_diag), self.config.feedback_dt());
        let plant = Arc::new(q.clone());
        let lq = match l.linearization {
            LqrLinearization::Hover => {
                let hover = HybridState::new(GroupElement::identity(GroupKind::SE3), DVector::zeros(6));
                LqrEndgame::about(plant, self.reference.clone(), &hover, &q.hover_input(), &qw, &rw, dt, l.threshold)?
            }
            LqrLinearization::Frozen => LqrEndgame::frozen(plant, self.reference.clone(), &qw, &rw, dt, l.threshold)?,
        };
        Ok(Some(lq))
    }
}
