use nalgebra::{DMatrix, DVector};

use super::schedule::ControlSchedule;
use crate::error::{Error, Result};
use crate::harness::rkmk4_step;
use crate::models::{interpolate, HybridState, Plant, Trajectory};
use crate::objective::QuadraticLieCost;

/// Uniform grid on `[t0, t0 + horizon]` with step `dt`, plus schedule breakpoints.
fn grid(schedule: &ControlSchedule, t0: f64, horizon: f64, dt: f64) -> Vec<f64> {
    let n = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let end = t0 + horizon;
    let mut ts: Vec<f64> = (0..n).map(|k| t0 + k as f64 * dt).collect();
    ts.push(end);
    let brk = schedule.breakpoints(t0, end);
    if !brk.is_empty() {
        ts.extend(brk);
        ts.sort_by(f64::total_cmp);
        // drop knots closer than 1e-12 s so no interval is degenerate
        ts.dedup_by(|b, a| (*b - *a).abs() < 1e-12);
    }
    ts
}

/// Forward simulation under `schedule`, one RK-MK4 step per grid interval.
pub fn rollout<P: Plant + ?Sized>(
    plant: &P,
    s0: &HybridState,
    t0: f64,
    horizon: f64,
    schedule: &ControlSchedule,
    dt: f64,
) -> Result<Trajectory> {
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::InvalidArgument("rollout horizon and step must be positive".into()));
    }
    let ts = grid(schedule, t0, horizon, dt);
    let mut traj = Trajectory {
        times: Vec::with_capacity(ts.len()),
        states: Vec::with_capacity(ts.len()),
        controls: Vec::with_capacity(ts.len()),
    };
    let mut s = s0.clone();
    for w in ts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let u0 = schedule.at(a)?;
        let um = schedule.at(0.5 * (a + b))?;
        let u1 = schedule.at_left(b)?;
        let next = rkmk4_step(plant, &s, a, b - a, [&u0, &um, &u1])?;
        traj.push(a, std::mem::replace(&mut s, next), u0);
    }
    let last = *ts.last().expect("grid has two points");
    let u = schedule.at_left(last)?;
    traj.push(last, s, u);
    Ok(traj)
}

/// Costate samples aligned with a rollout grid.
#[derive(Clone, Debug)]
pub struct Costate {
    pub times: Vec<f64>,
    pub rho: Vec<DVector<f64>>,
}

impl Costate {
    /// Linear interpolation clamped to the grid.
    pub fn at(&self, t: f64) -> Result<DVector<f64>> {
        let (t0, t1) = (self.times[0], self.times[self.times.len() - 1]);
        if t < t0 - 1e-9 || t > t1 + 1e-9 {
            return Err(Error::InvalidArgument(format!("time {t} outside costate grid [{t0}, {t1}]")));
        }
        let k = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            k => (k - 1).min(self.times.len() - 2),
        };
        let a = ((t - self.times[k]) / (self.times[k + 1] - self.times[k])).clamp(0.0, 1.0);
        Ok(&self.rho[k] * (1.0 - a) + &self.rho[k + 1] * a)
    }
}

struct Coeffs {
    at: DMatrix<f64>,
    grad: DVector<f64>,
}

fn coeffs<P: Plant + ?Sized>(
    plant: &P,
    cost: &QuadraticLieCost,
    s: &HybridState,
    u: &DVector<f64>,
    t: f64,
) -> Result<Coeffs> {
    let lin = plant.linearize(s, u, t);
    Ok(Coeffs { at: lin.a.transpose(), grad: cost.stage_gradient(s, t)? })
}

/// Backward RK4 for `rho' = -A^T rho - grad L` from `rho(T) = grad phi`.
pub fn backward_costate<P: Plant + ?Sized>(
    plant: &P,
    cost: &QuadraticLieCost,
    traj: &Trajectory,
    schedule: &ControlSchedule,
) -> Result<Costate> {
    let n = traj.len();
    if n < 2 {
        return Err(Error::InvalidArgument("costate needs at least two samples".into()));
    }
    let mut rho = vec![DVector::zeros(plant.tangent_dim()); n];
    rho[n - 1] = cost.terminal_gradient(&traj.states[n - 1], traj.times[n - 1])?;
    let f = |c: &Coeffs, r: &DVector<f64>| -(&c.at * r) - &c.grad;
    let mut right: Option<(DVector<f64>, Coeffs)> = None;
    for k in (0..n - 1).rev() {
        let (a, b) = (traj.times[k], traj.times[k + 1]);
        let h = b - a;
        let ub = schedule.at_left(b)?;
        let cb = match right.take() {
            Some((u, c)) if u == ub => c,
            _ => coeffs(plant, cost, &traj.states[k + 1], &ub, b)?,
        };
        let mid = interpolate(&traj.states[k], &traj.states[k + 1], 0.5);
        let cm = coeffs(plant, cost, &mid, &schedule.at(0.5 * (a + b))?, 0.5 * (a + b))?;
        let ua = schedule.at(a)?;
        let ca = coeffs(plant, cost, &traj.states[k], &ua, a)?;
        let r1 = &rho[k + 1];
        let k1 = f(&cb, r1);
        let k2 = f(&cm, &(r1 - &k1 * (0.5 * h)));
        let k3 = f(&cm, &(r1 - &k2 * (0.5 * h)));
        let k4 = f(&ca, &(r1 - &k3 * h));
        let r0 = r1 - (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        if r0.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { t: a, what: "costate".into() });
        }
        rho[k] = r0;
        right = Some((ua, ca));
    }
    Ok(Costate { times: traj.times.clone(), rho })
}

/// `rho^T [F(x, u2) - F(x, u1)]` with constrained rates.
pub fn mode_insertion_gradient<P: Plant + ?Sized>(
    rho: &DVector<f64>,
    plant: &P,
    s: &HybridState,
    u1: &DVector<f64>,
    u2: &DVector<f64>,
    t: f64,
) -> f64 {
    rho.dot(&(plant.rates(s, u2, t) - plant.rates(s, u1, t)))
}
