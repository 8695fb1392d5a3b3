use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{check_bounds, HybridState, Linearization, Plant};
use crate::error::Result;
use crate::liegroup::{AlgebraVector, GroupKind};

/// Kinematic car on SE(2).
///
/// `z = (omega, v, phi)`: yaw rate, forward speed and steering angle.
/// The yaw rate is algebraic (`omega = v sin(phi)`); it is carried in `z`
/// for reporting only and resynchronized after every integration step.
/// Inputs are `(dv/dt, dphi/dt)`.
#[derive(Clone, Debug)]
pub struct KinematicCar {
    u_min: DVector<f64>,
    u_max: DVector<f64>,
    steer_limit: f64,
}

pub const OMEGA: usize = 0;
pub const SPEED: usize = 1;
pub const STEER: usize = 2;

impl Default for KinematicCar {
    fn default() -> Self {
        Self {
            u_min: DVector::from_column_slice(&[-4.0, -5.0]),
            u_max: DVector::from_column_slice(&[4.0, 5.0]),
            steer_limit: PI / 3.0,
        }
    }
}

impl KinematicCar {
    pub fn new(u_min: DVector<f64>, u_max: DVector<f64>, steer_limit: f64) -> Result<Self> {
        check_bounds(&u_min, &u_max)?;
        if u_min.len() != 2 {
            return Err(crate::Error::InvalidConfig("car takes two inputs".into()));
        }
        if !(steer_limit > 0.0) {
            return Err(crate::Error::InvalidConfig("steer_limit must be positive".into()));
        }
        Ok(Self { u_min, u_max, steer_limit })
    }

    pub fn steer_limit(&self) -> f64 {
        self.steer_limit
    }

    /// State from heading, position, steering angle and speed.
    pub fn state(theta: f64, x: f64, y: f64, phi: f64, v: f64) -> HybridState {
        let g = crate::liegroup::GroupElement::se2(theta, x, y);
        HybridState::new(g, DVector::from_column_slice(&[v * phi.sin(), v, phi]))
    }
}

impl Plant for KinematicCar {
    fn kind(&self) -> GroupKind {
        GroupKind::SE2
    }

    fn z_dim(&self) -> usize {
        3
    }

    fn u_dim(&self) -> usize {
        2
    }

    fn u_min(&self) -> &DVector<f64> {
        &self.u_min
    }

    fn u_max(&self) -> &DVector<f64> {
        &self.u_max
    }

    fn drift(&self, s: &HybridState, _t: f64) -> (AlgebraVector, DVector<f64>) {
        let (v, phi) = (s.z[SPEED], s.z[STEER]);
        let xi =
            AlgebraVector::from_raw(GroupKind::SE2, DVector::from_column_slice(&[v * phi.sin(), v * phi.cos(), 0.0]));
        (xi, DVector::zeros(3))
    }

    fn control_matrix(&self, _s: &HybridState, _t: f64) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(6, 2);
        h[(3 + SPEED, 0)] = 1.0;
        h[(3 + STEER, 1)] = 1.0;
        h
    }

    fn constrain_rates(&self, s: &HybridState, rates: &mut DVector<f64>) {
        let phi = s.z[STEER];
        let r = &mut rates[3 + STEER];
        if (phi >= self.steer_limit && *r > 0.0) || (phi <= -self.steer_limit && *r < 0.0) {
            *r = 0.0;
        }
    }

    fn project(&self, s: &mut HybridState) {
        s.z[STEER] = s.z[STEER].clamp(-self.steer_limit, self.steer_limit);
        s.z[OMEGA] = s.z[SPEED] * s.z[STEER].sin();
    }

    fn linearize(&self, s: &HybridState, _u: &DVector<f64>, t: f64) -> Linearization {
        let (v, phi) = (s.z[SPEED], s.z[STEER]);
        let (xi, _) = self.drift(s, t);
        let mut a = DMatrix::zeros(6, 6);
        // the pose never enters the rates, so only -ad_xi remains in the group block
        a.view_mut((0, 0), (3, 3)).copy_from(&(-xi.ad().into_matrix()));
        a[(0, 3 + SPEED)] = phi.sin();
        a[(1, 3 + SPEED)] = phi.cos();
        a[(0, 3 + STEER)] = v * phi.cos();
        a[(1, 3 + STEER)] = -v * phi.sin();
        Linearization { a, b: self.control_matrix(s, t) }
    }
}
