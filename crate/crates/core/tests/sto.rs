mod common;

use std::sync::Arc;

use nalgebra::DVector;

use common::{diag, scenario_path, CoordSac, Sched};
use lie_sac::harness::{write_history, StoConfig};
use lie_sac::liegroup::GroupKind;
use lie_sac::models::{FixedTarget, PointMass};
use lie_sac::objective::QuadraticLieCost;
use lie_sac::sto::{objective, optimize_times, transition_gradient, SwitchedSystem};

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn coord(damping: f64) -> CoordSac {
    CoordSac {
        damping,
        u_min: v(&[-1.0, -1.0]),
        u_max: v(&[1.0, 1.0]),
        m: diag(&[2.0, 1.0]),
        q: diag(&[0.3, 0.3]),
        p_term: diag(&[1.0, 1.0, 0.5, 0.5]),
        p_d: v(&[1.0, 0.5]),
        v_d: v(&[0.0, 0.0]),
        u_nom: v(&[0.0, 0.0]),
        horizon: 2.0,
        sample_dt: 0.01,
        t_calc: 0.0,
        lambda0: 0.1,
        beta: 0.5,
        backtracks: 10,
        zeta: 0.1,
        gamma: -15.0,
        r: v(&[1.0, 1.0]),
        dt: 0.01,
        held: Vec::new(),
    }
}

#[test]
fn abelian_case_matches_coordinate_switching_gradient() {
    let damping = 0.3;
    let modes = vec![v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[-1.0, -0.5])];
    let plant = PointMass::new(GroupKind::SE2, damping).unwrap();
    let target = plant.state(&[1.0, 0.5], &[0.0, 0.0]);
    let cost = QuadraticLieCost::new(
        GroupKind::SE2,
        Arc::new(FixedTarget::new(target, v(&[0.0, 0.0]))),
        diag(&[1.0, 2.0, 1.0]),
        diag(&[0.3, 0.3]),
        diag(&[1.0, 1.0, 1.0, 0.5, 0.5]),
    )
    .unwrap();
    let init = plant.state(&[0.0, 0.0], &[0.2, 0.0]);
    let times = vec![0.6, 1.3];
    let sys = SwitchedSystem::new(Arc::new(plant), modes.clone(), times.clone(), (0.0, 2.0), init, 0.01).unwrap();
    let g = transition_gradient(&sys, &cost).unwrap();

    // J in coordinates as a function of the switching times
    let c = coord(damping);
    let j = |t: &[f64]| {
        let s = Sched {
            nominal: modes[2].clone(),
            segs: vec![(0.0, t[0], modes[0].clone()), (t[0], t[1], modes[1].clone())],
        };
        let (ts, xs) = c.rollout(&v(&[0.0, 0.0, 0.2, 0.0]), 0.0, 2.0, &s, 0.01);
        c.objective(&ts, &xs)
    };
    let j_lib = objective(&sys, &cost).unwrap();
    assert!((j(&times) - j_lib).abs() < 1e-12, "{} vs {j_lib}", j(&times));
    let h = 1e-5;
    for i in 0..2 {
        let (mut a, mut b) = (times.clone(), times.clone());
        a[i] += h;
        b[i] -= h;
        let fd = (j(&a) - j(&b)) / (2.0 * h);
        assert!((g[i] - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "T{}: {} vs {fd}", i + 1, g[i]);
    }
}

#[test]
fn coincident_times_are_a_valid_fixed_point() {
    let plant = PointMass::new(GroupKind::SE2, 0.0).unwrap();
    let target = plant.state(&[1.0, 0.0], &[0.0, 0.0]);
    let cost = QuadraticLieCost::new(
        GroupKind::SE2,
        Arc::new(FixedTarget::new(target, v(&[0.0, 0.0]))),
        diag(&[1.0, 1.0, 1.0]),
        diag(&[0.1, 0.1]),
        diag(&[1.0; 5]),
    )
    .unwrap();
    let modes = vec![v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[-1.0, 0.0])];
    let sys = SwitchedSystem::new(Arc::new(plant), modes, vec![1.0, 1.0], (0.0, 2.0), plant_state(), 0.01).unwrap();
    let g = transition_gradient(&sys, &cost).unwrap();
    assert!(g.iter().all(|x| x.is_finite()));
    assert_eq!(sys.project(&[1.0, 1.0]), vec![1.0, 1.0]);
}

fn plant_state() -> lie_sac::models::HybridState {
    PointMass::new(GroupKind::SE2, 0.0).unwrap().state(&[0.0, 0.0], &[0.0, 0.0])
}

#[test]
fn shipped_config_descends_and_stays_ordered() {
    let cfg = StoConfig::from_file(scenario_path("sto_car_three_mode.json")).unwrap();
    let (sys, cost) = cfg.build().unwrap();
    let (best, hist) = optimize_times(&sys, &cost, &cfg.options).unwrap();
    assert!(hist.windows(2).all(|w| w[1].cost <= w[0].cost));
    assert!(hist.last().unwrap().cost < hist[0].cost);
    let t = best.times();
    assert!(t.windows(2).all(|w| w[0] <= w[1]) && t[0] >= 0.0 && t[1] <= 3.0);
    let mut buf = Vec::new();
    write_history(&mut buf, &hist).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("iteration,cost,gradient_norm,step,T1,T2\n"));
    assert_eq!(text.lines().count(), hist.len() + 1);
}

#[test]
fn unknown_mode_names_are_config_errors() {
    let mut cfg = StoConfig::from_file(scenario_path("sto_car_three_mode.json")).unwrap();
    cfg.sequence[1] = "reverse".into();
    assert!(matches!(cfg.build(), Err(lie_sac::Error::InvalidConfig(_))));
    let mut cfg = StoConfig::from_file(scenario_path("sto_car_three_mode.json")).unwrap();
    cfg.times = vec![2.0, 1.0];
    assert!(cfg.build().is_err());
}
