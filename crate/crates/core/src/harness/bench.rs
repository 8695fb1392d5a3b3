use std::time::Instant;

use super::config::Scenario;
use crate::error::{Error, Result};
use crate::sac::rollout;

/// Wall-clock distribution of controller steps, in milliseconds.
#[derive(Clone, Debug, PartialEq)]
pub struct ComputeTiming {
    pub samples: Vec<f64>,
    pub median_ms: f64,
    pub p95_ms: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // nearest rank
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Times `steps` SAC steps along the closed loop from the scenario's initial
/// state after `warmup` untimed ones. The LQR endgame is not consulted.
pub fn measure_compute(sc: &Scenario, steps: usize, warmup: usize) -> Result<ComputeTiming> {
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one timed step".into()));
    }
    let plant = sc.plant.clone().into_arc();
    let mut sac = sc.controller(sc.config.seed)?;
    let dt = sc.config.feedback_dt();
    let sub = dt / sc.config.sim.substeps as f64;
    let mut s = sc.config.initial.build();
    plant.project(&mut s);
    let mut samples = Vec::with_capacity(steps);
    for k in 0..warmup + steps {
        let t = k as f64 * dt;
        let clock = Instant::now();
        let rec = sac.step(&s, t)?;
        let ms = clock.elapsed().as_secs_f64() * 1e3;
        if k >= warmup {
            samples.push(ms);
        }
        let sched = sac.schedule_with(&rec.committed);
        s = rollout(plant.as_ref(), &s, t, dt, &sched, sub)?.states.pop().expect("nonempty");
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(ComputeTiming { median_ms: quantile(&sorted, 0.5), p95_ms: quantile(&sorted, 0.95), samples })
}
