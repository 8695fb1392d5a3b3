use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{SamplingConfig, Scenario};
use super::run::{errors, simulate, TrialResult};
use crate::error::{Error, Result};
use crate::liegroup::{GroupElement, GroupKind};
use crate::models::HybridState;

/// Seed of trial `id` under a sweep seed; independent of scheduling order.
pub fn trial_seed(seed: u64, id: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng.gen()
}

fn unit3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    // uniform on the sphere
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vector3::new(r * a.cos(), r * a.sin(), z)
}

fn range(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.gen_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Initial state of one trial.
pub fn sample_initial(sc: &Scenario, rng: &mut ChaCha8Rng) -> Result<HybridState> {
    let cfg = &sc.config;
    let base = cfg.initial.build();
    match &cfg.sampling {
        None => Err(Error::InvalidConfig("scenario has no sampling section".into())),
        Some(SamplingConfig::CarBox { theta, x, y }) => {
            let (th, px, py) = (range(rng, *theta), range(rng, *x), range(rng, *y));
            Ok(HybridState::new(GroupElement::se2(th, px, py), base.z))
        }
        Some(SamplingConfig::TrackingOffset { position_error, attitude_error }) => {
            if sc.cost.kind() != GroupKind::SE3 {
                return Err(Error::InvalidConfig("tracking offsets need an SE(3) plant".into()));
            }
            let d = sc.reference.at(0.0)?.state;
            let dp = unit3(rng) * range(rng, *position_error);
            let angle = range(rng, *attitude_error);
            let axis = Unit::new_normalize(unit3(rng));
            let r = d.g.rotation3() * Rotation3::from_axis_angle(&axis, angle).into_inner();
            let p = d.g.translation3() + dp;
            Ok(HybridState::new(GroupElement::se3(&r, &p), d.z.clone()))
        }
    }
}

/// One summary line: trials whose statistic lies in `[lo, hi)` (or a single
/// time for the `success_by_time` section).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub section: String,
    pub lo: f64,
    pub hi: f64,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// 95% Wilson score interval.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z * z / (4.0 * n)) / n).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn row(section: &str, lo: f64, hi: f64, trials: usize, successes: usize) -> AggregateRow {
    let (ci_low, ci_high) = wilson_interval(successes, trials);
    let rate = if trials > 0 { successes as f64 / trials as f64 } else { f64::NAN };
    AggregateRow { section: section.into(), lo, hi, trials, successes, rate, ci_low, ci_high }
}

/// Trial outcome together with its initial errors.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub result: TrialResult,
    pub initial_attitude_error: f64,
    pub initial_position_error: f64,
}

// csv cannot serialize flattened structs
#[derive(Serialize)]
struct TrialRow {
    trial_id: usize,
    seed: u64,
    initial_attitude_error: f64,
    initial_position_error: f64,
    success: bool,
    time_to_success: f64,
    final_attitude_error: f64,
    final_position_error: f64,
    final_velocity_error: f64,
    mean_step_compute_ms: f64,
    diverged: bool,
    max_orthogonality_defect: f64,
    lqr_engaged_at: f64,
    max_bound_violation: f64,
}

impl From<&TrialRecord> for TrialRow {
    fn from(r: &TrialRecord) -> Self {
        let t = &r.result;
        Self {
            trial_id: t.trial_id,
            seed: t.seed,
            initial_attitude_error: r.initial_attitude_error,
            initial_position_error: r.initial_position_error,
            success: t.success,
            time_to_success: t.time_to_success,
            final_attitude_error: t.final_attitude_error,
            final_position_error: t.final_position_error,
            final_velocity_error: t.final_velocity_error,
            mean_step_compute_ms: t.mean_step_compute_ms,
            diverged: t.diverged,
            max_orthogonality_defect: t.max_orthogonality_defect,
            lqr_engaged_at: t.lqr_engaged_at,
            max_bound_violation: t.max_bound_violation,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MonteCarloReport {
    /// Sorted by trial id.
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<AggregateRow>,
}

impl MonteCarloReport {
    pub fn successes(&self) -> usize {
        self.trials.iter().filter(|t| t.result.success).count()
    }

    pub fn success_rate(&self) -> f64 {
        self.successes() as f64 / self.trials.len().max(1) as f64
    }
}

fn run_trial(sc: &Scenario, seed: u64, id: usize) -> Result<TrialRecord> {
    let ts = trial_seed(seed, id);
    let mut rng = ChaCha8Rng::seed_from_u64(ts);
    let init = sample_initial(sc, &mut rng)?;
    let (a0, p0, _) = errors(sc, &init, 0.0)?;
    let (_, result) = simulate(sc, &init, id, ts, false)?;
    Ok(TrialRecord { result, initial_attitude_error: a0, initial_position_error: p0 })
}

/// Runs `trials` independent seeded trials in parallel and aggregates them.
pub fn monte_carlo(sc: &Scenario, trials: usize, seed: u64) -> Result<MonteCarloReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let mut records = (0..trials).into_par_iter().map(|id| run_trial(sc, seed, id)).collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.result.trial_id);
    let summary = aggregate(&records, sc.config.sim.duration);
    Ok(MonteCarloReport { trials: records, summary })
}

const BINS: usize = 4;

fn aggregate(records: &[TrialRecord], duration: f64) -> Vec<AggregateRow> {
    let n = records.len();
    let ok = |r: &&TrialRecord| r.result.success;
    let mut out = vec![row("overall", 0.0, duration, n, records.iter().filter(ok).count())];
    for k in 1..=10 {
        let t = duration * k as f64 / 10.0;
        let s = records.iter().filter(|r| r.result.success && r.result.time_to_success <= t).count();
        out.push(row("success_by_time", t, t, n, s));
    }
    let bins = |section: &str, key: fn(&TrialRecord) -> f64, out: &mut Vec<AggregateRow>| {
        let hi = records.iter().map(key).fold(0.0, f64::max);
        let w = if hi > 0.0 { hi / BINS as f64 } else { 1.0 };
        for b in 0..BINS {
            let (lo, up) = (b as f64 * w, (b + 1) as f64 * w);
            let inside = |r: &&TrialRecord| {
                let x = key(r);
                x >= lo && (x < up || b + 1 == BINS)
            };
            let total = records.iter().filter(inside).count();
            let s = records.iter().filter(inside).filter(ok).count();
            out.push(row(section, lo, up, total, s));
        }
    };
    bins("initial_position_error", |r| r.initial_position_error, &mut out);
    bins("initial_attitude_error", |r| r.initial_attitude_error, &mut out);
    out
}

/// Writes the summary and the per-trial table.
pub fn write_report<W: std::io::Write, V: std::io::Write>(
    report: &MonteCarloReport,
    summary: W,
    trials: V,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(summary);
    for r in &report.summary {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(trials);
    for r in &report.trials {
        w.serialize(TrialRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}
