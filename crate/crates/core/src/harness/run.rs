use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use super::config::{Scenario, SuccessConfig};
use crate::error::{Error, Result};
use crate::models::{HybridState, Plant};
use crate::sac::{rollout, ControllerMode, LqrEndgame, Segment};

/// Outcome of one closed-loop run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial_id: usize,
    pub seed: u64,
    pub success: bool,
    /// First time the state lies in the success region (NaN if never).
    pub time_to_success: f64,
    pub final_attitude_error: f64,
    pub final_position_error: f64,
    pub final_velocity_error: f64,
    pub mean_step_compute_ms: f64,
    pub diverged: bool,
    pub max_orthogonality_defect: f64,
    /// First time the LQR endgame produced the control (NaN if never).
    pub lqr_engaged_at: f64,
    /// Largest amount by which any applied control left the box (0 when respected).
    pub max_bound_violation: f64,
}

/// One feedback step of the trajectory log.
#[derive(Clone, Debug)]
pub struct LogRow {
    pub t: f64,
    pub state: HybridState,
    /// Control applied at `t`.
    pub u: DVector<f64>,
    pub j1: f64,
    pub predicted_mig: f64,
    pub tau0: f64,
    pub lambda: f64,
    pub mode: ControllerMode,
    /// Actions held while computing `j1`.
    pub held: Vec<Segment>,
    pub weight_block: Option<u64>,
    pub compute_ms: f64,
}

/// Attitude, position and velocity errors against the scenario's target.
pub fn errors(sc: &Scenario, s: &HybridState, t: f64) -> Result<(f64, f64, f64)> {
    let d = sc.reference.at(t)?.state;
    let rel = d.g.between(&s.g)?;
    let att = match s.kind() {
        crate::liegroup::GroupKind::SE2 => rel.heading().abs(),
        _ => {
            let r = rel.rotation3();
            ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
        }
    };
    let pos = (s.g.translation3() - d.g.translation3()).norm();
    let vel = match s.kind() {
        crate::liegroup::GroupKind::SE2 => (s.z[1] - d.z[1]).abs(),
        _ => (s.z.rows(3, 3) - d.z.rows(3, 3)).norm(),
    };
    Ok((att, pos, vel))
}

fn in_region(sc: &Scenario, lqr: Option<&LqrEndgame>, s: &HybridState, t: f64) -> Result<bool> {
    match &sc.config.success {
        SuccessConfig::CarRegion { heading, position, speed } => {
            let (a, p, v) = errors(sc, s, t)?;
            Ok(a <= *heading && p <= *position && v <= *speed)
        }
        SuccessConfig::LqrRegion => {
            let lq = lqr.expect("validated at build time");
            Ok(match lq.tracking_error(s, t) {
                Ok((_, m)) => m <= lq.threshold(),
                Err(Error::BranchCut { .. }) => false,
                Err(e) => return Err(e),
            })
        }
    }
}

/// Closed-loop simulation from `init`. Divergence ends the run as a failure.
pub fn simulate(
    sc: &Scenario,
    init: &HybridState,
    trial_id: usize,
    seed: u64,
    record: bool,
) -> Result<(Vec<LogRow>, TrialResult)> {
    let cfg = &sc.config;
    let plant = sc.plant.clone().into_arc();
    let mut sac = sc.controller(seed)?;
    let lqr = sc.endgame()?;
    let dt = cfg.feedback_dt();
    let sub = dt / cfg.sim.substeps as f64;
    let mut s = init.clone();
    plant.project(&mut s);
    let mut log = Vec::new();
    let mut res = TrialResult {
        trial_id,
        seed,
        success: false,
        time_to_success: f64::NAN,
        final_attitude_error: f64::NAN,
        final_position_error: f64::NAN,
        final_velocity_error: f64::NAN,
        mean_step_compute_ms: f64::NAN,
        diverged: false,
        max_orthogonality_defect: s.g.orthogonality_defect(),
        lqr_engaged_at: f64::NAN,
        max_bound_violation: 0.0,
    };
    let mut total_ms = 0.0;
    let mut steps = 0usize;
    let mut t = 0.0;
    for k in 0..cfg.steps() {
        t = k as f64 * dt;
        let clock = Instant::now();
        let lqr_u = match &lqr {
            Some(lq) => lq.command(&s, t)?,
            None => None,
        };
        let (committed, row) = match lqr_u {
            Some(u) => {
                sac.clear();
                if res.lqr_engaged_at.is_nan() {
                    res.lqr_engaged_at = t;
                }
                let seg = vec![Segment::new(t, t + dt, u.clone())];
                let row = LogRow {
                    t,
                    state: s.clone(),
                    u,
                    j1: f64::NAN,
                    predicted_mig: f64::NAN,
                    tau0: f64::NAN,
                    lambda: 0.0,
                    mode: ControllerMode::Lqr,
                    held: Vec::new(),
                    weight_block: None,
                    compute_ms: 0.0,
                };
                (seg, row)
            }
            None => match sac.step(&s, t) {
                Ok(rec) => {
                    let u = sac.applied(&rec.committed, t)?;
                    let row = LogRow {
                        t,
                        state: s.clone(),
                        u,
                        j1: rec.j1,
                        predicted_mig: rec.predicted_mig,
                        tau0: rec.tau0,
                        lambda: rec.lambda,
                        mode: rec.mode,
                        held: rec.held,
                        weight_block: rec.weight_block,
                        compute_ms: 0.0,
                    };
                    (rec.committed, row)
                }
                Err(Error::Divergence { .. }) => {
                    res.diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            },
        };
        let ms = clock.elapsed().as_secs_f64() * 1e3;
        total_ms += ms;
        steps += 1;
        let sched = sac.schedule_with(&committed);
        for seg in sched.segments() {
            res.max_bound_violation = res.max_bound_violation.max(violation(plant.as_ref(), &seg.u));
        }
        if committed.is_empty() {
            res.max_bound_violation = res.max_bound_violation.max(violation(plant.as_ref(), &row.u));
        }
        if record {
            log.push(LogRow { compute_ms: ms, ..row });
        }
        match rollout(plant.as_ref(), &s, t, dt, &sched, sub) {
            Ok(tr) => s = tr.states.last().expect("nonempty").clone(),
            Err(Error::Divergence { .. }) => {
                res.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
        t = (k + 1) as f64 * dt;
        res.max_orthogonality_defect = res.max_orthogonality_defect.max(s.g.orthogonality_defect());
        if !res.success && in_region(sc, lqr.as_ref(), &s, t)? {
            res.success = true;
            res.time_to_success = t;
            if cfg.sim.stop_on_success {
                break;
            }
        }
    }
    if steps > 0 {
        res.mean_step_compute_ms = total_ms / steps as f64;
    }
    if !res.diverged {
        let (a, p, v) = match errors(sc, &s, t) {
            Ok(e) => e,
            Err(Error::BranchCut { .. }) => (std::f64::consts::PI, f64::NAN, f64::NAN),
            Err(e) => return Err(e),
        };
        res.final_attitude_error = a;
        res.final_position_error = p;
        res.final_velocity_error = v;
    } else {
        res.success = false;
    }
    if cfg.steps() == 0 {
        res.success = false;
    }
    Ok((log, res))
}

fn violation(plant: &dyn Plant, u: &DVector<f64>) -> f64 {
    u.iter()
        .zip(plant.u_min().iter().zip(plant.u_max().iter()))
        .map(|(x, (l, h))| (l - x).max(x - h).max(0.0))
        .fold(0.0, f64::max)
}

/// Runs the scenario from its configured initial state with its seed.
pub fn run_scenario(sc: &Scenario) -> Result<(Vec<LogRow>, TrialResult)> {
    simulate(sc, &sc.config.initial.build(), 0, sc.config.seed, true)
}

fn format_held(held: &[Segment]) -> String {
    let item = |s: &Segment| {
        let mut f = vec![s.start.to_string(), s.end.to_string()];
        f.extend(s.u.iter().map(f64::to_string));
        f.join(":")
    };
    held.iter().map(item).collect::<Vec<_>>().join(";")
}

/// Inverse of the `held` column encoding.
pub fn parse_held(field: &str) -> Result<Vec<Segment>> {
    let bad = || Error::InvalidConfig(format!("malformed held column: {field:?}"));
    field
        .split(';')
        .filter(|p| !p.is_empty())
        .map(|item| {
            let v: Vec<f64> = item.split(':').map(|x| x.parse().map_err(|_| bad())).collect::<Result<_>>()?;
            if v.len() < 3 {
                return Err(bad());
            }
            Ok(Segment::new(v[0], v[1], DVector::from_column_slice(&v[2..])))
        })
        .collect()
}

/// Trajectory CSV: time, pose (row-major), z, u, controller diagnostics and
/// the held actions used for `j1` as `start:end:u0:u1...` items separated by `;`.
pub fn write_log<W: Write>(out: W, sc: &Scenario, rows: &[LogRow]) -> Result<()> {
    let plant = sc.plant.clone().into_arc();
    let n = plant.kind().matrix_size();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..n * n).map(|i| format!("g{}{}", i / n, i % n)));
    header.extend((0..plant.z_dim()).map(|i| format!("z{i}")));
    header.extend((0..plant.u_dim()).map(|i| format!("u{i}")));
    header.extend(["j1", "predicted_mig", "tau0", "lambda", "controller_mode", "held"].map(String::from));
    header.extend(["weight_block", "compute_ms"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.t.to_string()];
        rec.extend(r.state.g.to_row_major().iter().map(f64::to_string));
        rec.extend(r.state.z.iter().map(f64::to_string));
        rec.extend(r.u.iter().map(f64::to_string));
        rec.extend([r.j1, r.predicted_mig, r.tau0, r.lambda].map(|x| f64::to_string(&x)));
        rec.push(r.mode.to_string());
        rec.push(format_held(&r.held));
        rec.push(r.weight_block.map(|b| b.to_string()).unwrap_or_default());
        rec.push(r.compute_ms.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
