//! Control-affine plants evolving on a Lie group with Euclidean auxiliary states.
//!
//! A state is a pair `(g, z)`; the dynamics are `g' = g * xi(g, z, u)` and
//! `z' = zeta(g, z, u)`, both affine in `u`. Perturbations are written in
//! stacked coordinates `(eta, dz)` with `eta = g^-1 dg`, so every rate,
//! gradient and Jacobian in this crate has dimension `kind.dim() + z_dim`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::liegroup::{AlgebraVector, GroupElement, GroupKind};

mod car;
mod flatness;
mod point_mass;
mod quadrotor;

pub use car::KinematicCar;
pub use flatness::{FlatReference, SinusoidOutputs};
pub use point_mass::PointMass;
pub use quadrotor::Quadrotor;

/// Standard gravity used by the quadrotor model.
pub const GRAVITY: f64 = 9.81;

/// Finite-difference step for generic linearization.
const FD_STEP: f64 = 1e-6;

/// Pose on the group plus Euclidean auxiliary states.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridState {
    pub g: GroupElement,
    pub z: DVector<f64>,
}

impl HybridState {
    pub fn new(g: GroupElement, z: DVector<f64>) -> Self {
        Self { g, z }
    }

    pub fn kind(&self) -> GroupKind {
        self.g.kind()
    }

    /// Dimension of the stacked perturbation `(eta, dz)`.
    pub fn tangent_dim(&self) -> usize {
        self.g.kind().dim() + self.z.len()
    }

    /// `(g * exp(eta), z + dz)` for a stacked tangent vector.
    pub fn perturb(&self, delta: &DVector<f64>) -> Self {
        let d = self.kind().dim();
        let eta = AlgebraVector::from_raw(self.kind(), delta.rows(0, d).into_owned());
        let g = self.g.compose(&eta.exp()).expect("same group");
        Self { g, z: &self.z + delta.rows(d, self.z.len()) }
    }

    pub fn is_finite(&self) -> bool {
        self.g.matrix().iter().chain(self.z.iter()).all(|x| x.is_finite())
    }
}

/// Sampled state path with the control applied on each interval.
///
/// `controls[k]` acts on `[times[k], times[k + 1])`; the last entry repeats
/// the final control so the three vectors have equal length.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<HybridState>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, s: HybridState, u: DVector<f64>) {
        self.times.push(t);
        self.states.push(s);
        self.controls.push(u);
    }

    pub fn last_state(&self) -> Option<&HybridState> {
        self.states.last()
    }

    /// Index `k` with `times[k] <= t < times[k + 1]`, clamped to the grid.
    pub fn interval(&self, t: f64) -> usize {
        match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            k => (k - 1).min(self.times.len().saturating_sub(2)),
        }
    }

    /// State at `t` by geodesic interpolation between neighbouring samples.
    pub fn state_at(&self, t: f64) -> HybridState {
        let k = self.interval(t);
        if self.len() < 2 {
            return self.states[0].clone();
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let a = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        interpolate(&self.states[k], &self.states[k + 1], a)
    }
}

/// `(g0 exp(a log(g0^-1 g1)), (1 - a) z0 + a z1)`; falls back to the nearer
/// sample if the step crosses a logarithm branch cut.
pub fn interpolate(s0: &HybridState, s1: &HybridState, a: f64) -> HybridState {
    let z = &s0.z * (1.0 - a) + &s1.z * a;
    let g = match s0.g.between(&s1.g).and_then(|d| d.log()) {
        Ok(x) => s0.g.compose(&x.scale(a).exp()).expect("same group"),
        Err(_) if a < 0.5 => s0.g.clone(),
        Err(_) => s1.g.clone(),
    };
    HybridState::new(g, z)
}

/// Linearization of the stacked rates about a state and control.
#[derive(Clone, Debug)]
pub struct Linearization {
    /// `n x n`; the group block already contains `D_g xi - ad_xi`.
    pub a: DMatrix<f64>,
    /// `n x m`
    pub b: DMatrix<f64>,
}

/// A control-affine plant on a Lie group.
pub trait Plant: Send + Sync + fmt::Debug {
    fn kind(&self) -> GroupKind;
    fn z_dim(&self) -> usize;
    fn u_dim(&self) -> usize;
    fn u_min(&self) -> &DVector<f64>;
    fn u_max(&self) -> &DVector<f64>;

    /// Control-free part of the dynamics: group rate and z-rate at `u = 0`.
    fn drift(&self, s: &HybridState, t: f64) -> (AlgebraVector, DVector<f64>);

    /// Stacked `n x m` input matrix.
    fn control_matrix(&self, s: &HybridState, t: f64) -> DMatrix<f64>;

    /// Rate modification for state constraints (applied by the integrator).
    fn constrain_rates(&self, _s: &HybridState, _rates: &mut DVector<f64>) {}

    /// Projection applied after every integration step.
    fn project(&self, _s: &mut HybridState) {}

    fn tangent_dim(&self) -> usize {
        self.kind().dim() + self.z_dim()
    }

    /// Unconstrained stacked rates `drift + h * u`.
    fn raw_rates(&self, s: &HybridState, u: &DVector<f64>, t: f64) -> DVector<f64> {
        let (xi, zr) = self.drift(s, t);
        let d = self.kind().dim();
        let mut out = DVector::zeros(self.tangent_dim());
        out.rows_mut(0, d).copy_from(xi.coords());
        out.rows_mut(d, self.z_dim()).copy_from(&zr);
        out + self.control_matrix(s, t) * u
    }

    /// Stacked rates including state constraints.
    fn rates(&self, s: &HybridState, u: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut r = self.raw_rates(s, u, t);
        self.constrain_rates(s, &mut r);
        r
    }

    /// Linearization of the unconstrained dynamics. The default uses central
    /// differences along `g * exp(s e_i)` and `z + s e_j` plus the exact `-ad_xi` term.
    fn linearize(&self, s: &HybridState, u: &DVector<f64>, t: f64) -> Linearization {
        numerical_linearization(self, s, u, t)
    }
}

/// Central-difference linearization, usable by any plant (and as a test oracle).
pub fn numerical_linearization<P: Plant + ?Sized>(
    plant: &P,
    s: &HybridState,
    u: &DVector<f64>,
    t: f64,
) -> Linearization {
    let n = plant.tangent_dim();
    let d = plant.kind().dim();
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = FD_STEP;
        let fp = plant.raw_rates(&s.perturb(&e), u, t);
        let fm = plant.raw_rates(&s.perturb(&(-&e)), u, t);
        a.set_column(j, &((fp - fm) / (2.0 * FD_STEP)));
    }
    let xi = group_rate(plant, s, u, t);
    let ad = xi.ad().into_matrix();
    let mut blk = a.view_mut((0, 0), (d, d));
    blk -= ad;
    Linearization { a, b: plant.control_matrix(s, t) }
}

/// Algebra part of the rates at `(s, u)`.
pub fn group_rate<P: Plant + ?Sized>(plant: &P, s: &HybridState, u: &DVector<f64>, t: f64) -> AlgebraVector {
    let r = plant.raw_rates(s, u, t);
    let d = plant.kind().dim();
    AlgebraVector::from_raw(plant.kind(), r.rows(0, d).into_owned())
}

/// Elementwise clamp into `[lo, hi]`.
pub fn clamp_vec(u: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(u.len(), u.iter().zip(lo.iter().zip(hi.iter())).map(|(x, (l, h))| x.clamp(*l, *h)))
}

/// A point on a reference trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePoint {
    pub t: f64,
    pub state: HybridState,
    /// Feedforward control.
    pub u_ff: DVector<f64>,
}

/// Time-indexed desired state and feedforward control.
pub trait Reference: Send + Sync + fmt::Debug {
    fn at(&self, t: f64) -> Result<ReferencePoint>;
}

/// A constant set point.
#[derive(Clone, Debug)]
pub struct FixedTarget {
    pub state: HybridState,
    pub u_ff: DVector<f64>,
}

impl FixedTarget {
    pub fn new(state: HybridState, u_ff: DVector<f64>) -> Self {
        Self { state, u_ff }
    }
}

impl Reference for FixedTarget {
    fn at(&self, t: f64) -> Result<ReferencePoint> {
        Ok(ReferencePoint { t, state: self.state.clone(), u_ff: self.u_ff.clone() })
    }
}

/// The concrete plants that scenario files can name.
#[derive(Clone, Debug)]
pub enum PlantModel {
    Car(KinematicCar),
    Quadrotor(Quadrotor),
    PointMass(PointMass),
}

impl PlantModel {
    pub fn into_arc(self) -> Arc<dyn Plant> {
        match self {
            PlantModel::Car(p) => Arc::new(p),
            PlantModel::Quadrotor(p) => Arc::new(p),
            PlantModel::PointMass(p) => Arc::new(p),
        }
    }
}

pub(crate) fn check_bounds(u_min: &DVector<f64>, u_max: &DVector<f64>) -> Result<()> {
    if u_min.len() != u_max.len() {
        return Err(Error::InvalidConfig("control bound dimensions differ".into()));
    }
    if u_min.iter().zip(u_max.iter()).any(|(l, h)| !(l < h)) {
        return Err(Error::InvalidConfig("u_min must be strictly below u_max".into()));
    }
    Ok(())
}
