use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::rollout::{mode_insertion_gradient, rollout, Costate};
use super::schedule::{ControlSchedule, Segment};
use crate::error::{Error, Result};
use crate::models::{clamp_vec, HybridState, Plant, Trajectory};
use crate::objective::QuadraticLieCost;

/// How the desired insertion gradient is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AlphaMode {
    /// `alpha_d = gamma * J1`
    Proportional {
        gamma: f64,
    },
    Fixed {
        alpha_d: f64,
    },
}

/// Controller parameters. `None` fields take defaults derived from `sample_dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SacParams {
    pub horizon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: AlphaMode,
    /// Diagonal of the control weight.
    pub r: Vec<f64>,
    pub sample_dt: f64,
    #[serde(default)]
    pub tau_grid_dt: Option<f64>,
    #[serde(default)]
    pub lambda0: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_backtracks")]
    pub max_backtracks: u32,
    /// Planning delay; must equal the feedback period.
    pub t_calc: f64,
    #[serde(default = "default_zeta")]
    pub sufficient_decrease: f64,
}

fn default_alpha() -> AlphaMode {
    AlphaMode::Proportional { gamma: -15.0 }
}

fn default_beta() -> f64 {
    0.5
}

fn default_backtracks() -> u32 {
    10
}

fn default_zeta() -> f64 {
    0.1
}

impl SacParams {
    pub fn new(horizon: f64, r: Vec<f64>, sample_dt: f64, t_calc: f64) -> Self {
        Self {
            horizon,
            alpha: default_alpha(),
            r,
            sample_dt,
            tau_grid_dt: None,
            lambda0: None,
            beta: default_beta(),
            max_backtracks: default_backtracks(),
            t_calc,
            sufficient_decrease: default_zeta(),
        }
    }

    pub fn tau_grid_dt(&self) -> f64 {
        self.tau_grid_dt.unwrap_or(self.sample_dt)
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0.unwrap_or(4.0 * self.sample_dt)
    }

    pub fn r_diag(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.r)
    }

    pub fn validate(&self, u_dim: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.r.len() != u_dim {
            return bad(&format!("R needs {u_dim} diagonal entries, got {}", self.r.len()));
        }
        if self.r.iter().any(|r| !(*r > 0.0)) {
            return bad("R entries must be strictly positive");
        }
        if let AlphaMode::Proportional { gamma } = self.alpha {
            if !(gamma < 0.0) {
                return bad("gamma must be negative");
            }
        }
        if let AlphaMode::Fixed { alpha_d } = self.alpha {
            if !(alpha_d < 0.0) {
                return bad("alpha_d must be negative");
            }
        }
        if !(self.horizon > 0.0 && self.sample_dt > 0.0 && self.sample_dt <= self.horizon) {
            return bad("need 0 < sample_dt <= horizon");
        }
        if !(self.tau_grid_dt() > 0.0 && self.lambda0() > 0.0) {
            return bad("tau_grid_dt and lambda0 must be positive");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.t_calc >= 0.0 && self.t_calc < self.horizon) {
            return bad("t_calc must lie in [0, horizon)");
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return bad("sufficient_decrease must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn alpha_d(&self, j1: f64) -> f64 {
        match self.alpha {
            AlphaMode::Proportional { gamma } => gamma * j1,
            AlphaMode::Fixed { alpha_d } => alpha_d,
        }
    }
}

/// A candidate action before its duration is chosen.
#[derive(Clone, Debug, PartialEq)]
pub struct SacAction {
    pub u2: DVector<f64>,
    pub tau0: f64,
    pub lambda: f64,
    pub predicted_mig: f64,
}

/// Unsaturated minimizer `u1 + (p p^T + R)^-1 p alpha_d` with `p = h^T rho`.
pub fn optimal_action(
    rho: &DVector<f64>,
    h: &nalgebra::DMatrix<f64>,
    u1: &DVector<f64>,
    r_diag: &DVector<f64>,
    alpha_d: f64,
) -> DVector<f64> {
    let p = h.transpose() * rho;
    let rp = p.component_div(r_diag);
    u1 + rp * (alpha_d / (1.0 + p.dot(&p.component_div(r_diag))))
}

/// Elementwise clamp into the plant's box.
pub fn saturate<P: Plant + ?Sized>(plant: &P, u: &DVector<f64>) -> DVector<f64> {
    clamp_vec(u, plant.u_min(), plant.u_max())
}

/// Result of scanning the insertion-time grid.
#[derive(Clone, Debug)]
pub struct InsertionScan {
    /// Best action, if any grid point has negative insertion gradient.
    pub best: Option<SacAction>,
    /// Largest `|u2 - u1|` seen on the grid.
    pub max_deviation: f64,
}

/// Saturated optimal action and its insertion gradient at every grid time in
/// `[t + t_calc, t + T]`; keeps the most negative, earliest on ties.
#[allow(clippy::too_many_arguments)]
pub fn choose_insertion_time<P: Plant + ?Sized>(
    plant: &P,
    traj: &Trajectory,
    costate: &Costate,
    schedule: &ControlSchedule,
    params: &SacParams,
    t: f64,
    alpha_d: f64,
) -> Result<InsertionScan> {
    let r = params.r_diag();
    let end = t + params.horizon + 1e-9;
    let dtau = params.tau_grid_dt();
    let mut best: Option<SacAction> = None;
    let mut max_deviation: f64 = 0.0;
    let mut j = 0usize;
    loop {
        let tau = t + params.t_calc + j as f64 * dtau;
        if tau > end {
            break;
        }
        let tau = tau.min(t + params.horizon);
        j += 1;
        let s = traj.state_at(tau);
        let u1 = schedule.at(tau)?;
        let rho = costate.at(tau)?;
        let h = plant.control_matrix(&s, tau);
        let u2 = saturate(plant, &optimal_action(&rho, &h, &u1, &r, alpha_d));
        max_deviation = max_deviation.max((&u2 - &u1).amax());
        let mig = mode_insertion_gradient(&rho, plant, &s, &u1, &u2, tau);
        if mig < 0.0 && best.as_ref().is_none_or(|b| mig < b.predicted_mig) {
            best = Some(SacAction { u2, tau0: tau, lambda: 0.0, predicted_mig: mig });
        }
    }
    Ok(InsertionScan { best, max_deviation })
}

/// Backtracking search for the action duration.
///
/// `base` is the schedule the action is inserted into and `j1` the cost the
/// result is compared against. Returns the accepted duration and the new
/// cost, or `(0, j1)` when no tested duration gives sufficient decrease.
#[allow(clippy::too_many_arguments)]
pub fn line_search_duration<P: Plant + ?Sized>(
    plant: &P,
    cost: &QuadraticLieCost,
    s: &HybridState,
    t: f64,
    base: &ControlSchedule,
    j1: f64,
    action: &SacAction,
    params: &SacParams,
) -> Result<(f64, f64)> {
    let cap = t + params.horizon - action.tau0;
    let mut lambda = params.lambda0();
    for _ in 0..=params.max_backtracks {
        let lam = lambda.min(cap);
        if lam > 0.0 {
            let sched = base.clone().with(Segment::new(action.tau0, action.tau0 + lam, action.u2.clone()));
            let traj = rollout(plant, s, t, params.horizon, &sched, params.sample_dt)?;
            match cost.total_objective(&traj) {
                Ok(j) if j - j1 <= params.sufficient_decrease * lam * action.predicted_mig => return Ok((lam, j)),
                Ok(_) | Err(Error::BranchCut { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        lambda *= params.beta;
    }
    Ok((0.0, j1))
}
