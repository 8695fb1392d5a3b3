//! Switching-time optimization for switched systems on Lie groups.
//!
//! Mode `i` is the plant under a constant control `u_i`, active on
//! `[T_{i-1}, T_i)` with `T_0` and `T_N` fixed. The gradient of the cost with
//! respect to an interior switching time is `rho(T_i)^T [f_i - f_{i+1}]` at
//! the state reached at `T_i`.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{HybridState, Plant, Trajectory};
use crate::objective::QuadraticLieCost;
use crate::sac::{backward_costate, rollout, ControlSchedule, Nominal, Segment};

/// Ordered modes with their switching times.
#[derive(Clone, Debug)]
pub struct SwitchedSystem {
    plant: Arc<dyn Plant>,
    modes: Vec<DVector<f64>>,
    times: Vec<f64>,
    window: (f64, f64),
    initial: HybridState,
    dt: f64,
}

impl SwitchedSystem {
    /// `times` are the `N - 1` interior switching times for `N = modes.len()`.
    pub fn new(
        plant: Arc<dyn Plant>,
        modes: Vec<DVector<f64>>,
        times: Vec<f64>,
        window: (f64, f64),
        initial: HybridState,
        dt: f64,
    ) -> Result<Self> {
        if modes.is_empty() || times.len() + 1 != modes.len() {
            return Err(Error::InvalidConfig(format!(
                "{} modes need {} switching times, got {}",
                modes.len(),
                modes.len().saturating_sub(1),
                times.len()
            )));
        }
        if modes.iter().any(|u| u.len() != plant.u_dim()) {
            return Err(Error::InvalidConfig("mode control has wrong dimension".into()));
        }
        if !(window.1 > window.0 && dt > 0.0) {
            return Err(Error::InvalidConfig("need T_0 < T_N and a positive step".into()));
        }
        let sys = Self { plant, modes, times, window, initial, dt };
        if !sys.is_ordered(&sys.times) {
            return Err(Error::InvalidConfig("switching times must satisfy T_0 <= T_1 <= ... <= T_N".into()));
        }
        Ok(sys)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn modes(&self) -> &[DVector<f64>] {
        &self.modes
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn with_times(&self, times: Vec<f64>) -> Result<Self> {
        Self::new(self.plant.clone(), self.modes.clone(), times, self.window, self.initial.clone(), self.dt)
    }

    fn is_ordered(&self, times: &[f64]) -> bool {
        let mut prev = self.window.0;
        for &t in times.iter().chain(std::iter::once(&self.window.1)) {
            if !(t >= prev) {
                return false;
            }
            prev = t;
        }
        true
    }

    /// Clamps each time into `[T_{i-1}, T_N]` in order.
    pub fn project(&self, times: &[f64]) -> Vec<f64> {
        let mut prev = self.window.0;
        times
            .iter()
            .map(|&t| {
                let c = t.clamp(prev, self.window.1);
                prev = c;
                c
            })
            .collect()
    }

    fn schedule(&self) -> ControlSchedule {
        let last = self.modes.len() - 1;
        let mut s = ControlSchedule::new(Nominal::Constant(self.modes[last].clone()));
        let mut start = self.window.0;
        for (i, &end) in self.times.iter().enumerate() {
            s = s.with(Segment::new(start, end, self.modes[i].clone()));
            start = end;
        }
        s
    }

    pub fn simulate(&self) -> Result<Trajectory> {
        let (t0, tn) = self.window;
        rollout(self.plant.as_ref(), &self.initial, t0, tn - t0, &self.schedule(), self.dt)
    }
}

/// `J` for the current switching times.
pub fn objective(sys: &SwitchedSystem, cost: &QuadraticLieCost) -> Result<f64> {
    cost.total_objective(&sys.simulate()?)
}

/// `dJ/dT_i` for every interior switching time.
pub fn transition_gradient(sys: &SwitchedSystem, cost: &QuadraticLieCost) -> Result<DVector<f64>> {
    let sched = sys.schedule();
    let traj = sys.simulate()?;
    let rho = backward_costate(sys.plant.as_ref(), cost, &traj, &sched)?;
    let plant = sys.plant.as_ref();
    let mut grad = DVector::zeros(sys.times.len());
    for (i, &ti) in sys.times.iter().enumerate() {
        let s = traj.state_at(ti);
        let diff = plant.rates(&s, &sys.modes[i], ti) - plant.rates(&s, &sys.modes[i + 1], ti);
        grad[i] = rho.at(ti)?.dot(&diff);
    }
    Ok(grad)
}

/// Descent settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoOptions {
    pub max_iterations: usize,
    pub gradient_tol: f64,
    /// Initial step as a fraction of `T_N - T_0`.
    pub initial_step: f64,
    pub armijo: f64,
    pub beta: f64,
    pub max_backtracks: usize,
}

impl Default for StoOptions {
    fn default() -> Self {
        Self { max_iterations: 100, gradient_tol: 1e-6, initial_step: 0.1, armijo: 1e-4, beta: 0.5, max_backtracks: 30 }
    }
}

/// One accepted iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct StoIterate {
    pub iteration: usize,
    pub cost: f64,
    pub gradient_norm: f64,
    pub step: f64,
    pub times: Vec<f64>,
}

/// Projected gradient descent with Armijo backtracking. Returns the final
/// times and the history, first entry being the initial point.
pub fn optimize_times(
    sys: &SwitchedSystem,
    cost: &QuadraticLieCost,
    opts: &StoOptions,
) -> Result<(SwitchedSystem, Vec<StoIterate>)> {
    let mut cur = sys.clone();
    let mut j = objective(&cur, cost)?;
    let span = sys.window.1 - sys.window.0;
    let mut history = Vec::new();
    for it in 0..=opts.max_iterations {
        let g = transition_gradient(&cur, cost)?;
        // projected-gradient residual T - P(T - g)
        let t_vec = DVector::from_column_slice(&cur.times);
        let gnorm = (&t_vec - DVector::from_column_slice(&cur.project((&t_vec - &g).as_slice()))).norm();
        history.push(StoIterate { iteration: it, cost: j, gradient_norm: gnorm, step: 0.0, times: cur.times.clone() });
        if gnorm <= opts.gradient_tol || it == opts.max_iterations {
            break;
        }
        let dir = &g / g.norm();
        let mut step = opts.initial_step * span;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let raw = DVector::from_column_slice(&cur.times) - &dir * step;
            let times = cur.project(raw.as_slice());
            let moved = DVector::from_column_slice(&times) - DVector::from_column_slice(&cur.times);
            let cand = cur.with_times(times)?;
            let jc = objective(&cand, cost)?;
            if jc <= j + opts.armijo * g.dot(&moved) {
                accepted = Some((cand, jc));
                break;
            }
            step *= opts.beta;
        }
        let Some((cand, jc)) = accepted else { break };
        cur = cand;
        j = jc;
        if let Some(last) = history.last_mut() {
            last.step = step;
        }
    }
    Ok((cur, history))
}
