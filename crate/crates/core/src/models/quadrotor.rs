use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3, Vector4};

use super::{HybridState, Linearization, Plant, GRAVITY};
use crate::error::{Error, Result};
use crate::liegroup::{skew3, AlgebraVector, GroupElement, GroupKind};

/// Quadrotor on SE(3) with body-fixed angular and linear velocities.
///
/// `z = (omega, v)`. The decision variables are squared rotor speeds
/// `w_i = u_i^2 in [0, w_max]`, which makes thrust and torque linear in `w`:
///
/// ```text
/// F = kt (w1 + w2 + w3 + w4)
/// M = (kt l (w2 - w4), kt l (w3 - w1), km (w1 - w2 + w3 - w4))
/// ```
#[derive(Clone, Debug)]
pub struct Quadrotor {
    pub mass: f64,
    pub inertia: Vector3<f64>,
    pub kt: f64,
    pub km: f64,
    pub arm: f64,
    w_min: DVector<f64>,
    w_max: DVector<f64>,
}

impl Default for Quadrotor {
    fn default() -> Self {
        Self::new(0.6, Vector3::new(0.04, 0.0375, 0.0675), 0.6, 0.15, 0.2, 6.0).expect("valid defaults")
    }
}

impl Quadrotor {
    pub fn new(mass: f64, inertia: Vector3<f64>, kt: f64, km: f64, arm: f64, w_max: f64) -> Result<Self> {
        if !(mass > 0.0) || inertia.iter().any(|j| !(*j > 0.0)) {
            return Err(Error::InvalidConfig("mass and inertia must be positive".into()));
        }
        if !(kt > 0.0 && km > 0.0 && arm > 0.0 && w_max > 0.0) {
            return Err(Error::InvalidConfig("rotor constants must be positive".into()));
        }
        Ok(Self { mass, inertia, kt, km, arm, w_min: DVector::zeros(4), w_max: DVector::from_element(4, w_max) })
    }

    /// Maps `w` to `(F, M1, M2, M3)`.
    pub fn mixer(&self) -> Matrix4<f64> {
        let (kt, km, l) = (self.kt, self.km, self.arm);
        Matrix4::new(
            kt,
            kt,
            kt,
            kt, //
            0.0,
            kt * l,
            0.0,
            -kt * l, //
            -kt * l,
            0.0,
            kt * l,
            0.0, //
            km,
            -km,
            km,
            -km,
        )
    }

    /// Thrust and body torque produced by `w`.
    pub fn wrench(&self, w: &DVector<f64>) -> (f64, Vector3<f64>) {
        let fm = self.mixer() * Vector4::new(w[0], w[1], w[2], w[3]);
        (fm[0], Vector3::new(fm[1], fm[2], fm[3]))
    }

    /// Rotor inputs producing a given thrust and torque (unclamped).
    pub fn inputs_for(&self, thrust: f64, torque: &Vector3<f64>) -> DVector<f64> {
        let inv = self.mixer().try_inverse().expect("mixer is invertible");
        let w = inv * Vector4::new(thrust, torque[0], torque[1], torque[2]);
        DVector::from_column_slice(w.as_slice())
    }

    /// Equal rotor inputs balancing gravity.
    pub fn hover_input(&self) -> DVector<f64> {
        DVector::from_element(4, self.mass * GRAVITY / (4.0 * self.kt))
    }

    pub fn state(r: &Matrix3<f64>, p: &Vector3<f64>, omega: &Vector3<f64>, v: &Vector3<f64>) -> HybridState {
        let z = DVector::from_column_slice(&[omega[0], omega[1], omega[2], v[0], v[1], v[2]]);
        HybridState::new(GroupElement::se3(r, p), z)
    }

    fn omega(s: &HybridState) -> Vector3<f64> {
        Vector3::new(s.z[0], s.z[1], s.z[2])
    }

    fn velocity(s: &HybridState) -> Vector3<f64> {
        Vector3::new(s.z[3], s.z[4], s.z[5])
    }

    fn jdiag(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.inertia)
    }

    fn jinv(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.inertia.map(|j| 1.0 / j))
    }
}

impl Plant for Quadrotor {
    fn kind(&self) -> GroupKind {
        GroupKind::SE3
    }

    fn z_dim(&self) -> usize {
        6
    }

    fn u_dim(&self) -> usize {
        4
    }

    fn u_min(&self) -> &DVector<f64> {
        &self.w_min
    }

    fn u_max(&self) -> &DVector<f64> {
        &self.w_max
    }

    fn drift(&self, s: &HybridState, _t: f64) -> (AlgebraVector, DVector<f64>) {
        let w = Self::omega(s);
        let v = Self::velocity(s);
        let r = s.g.rotation3();
        let jw = self.jdiag() * w;
        let wdot = self.jinv() * jw.cross(&w);
        let vdot = -w.cross(&v) - r.transpose() * Vector3::z() * GRAVITY;
        let xi = AlgebraVector::from_raw(GroupKind::SE3, s.z.clone());
        let zr = DVector::from_column_slice(&[wdot[0], wdot[1], wdot[2], vdot[0], vdot[1], vdot[2]]);
        (xi, zr)
    }

    fn control_matrix(&self, _s: &HybridState, _t: f64) -> DMatrix<f64> {
        let mix = self.mixer();
        let torque = self.jinv() * mix.fixed_view::<3, 4>(1, 0);
        let mut h = DMatrix::zeros(12, 4);
        h.view_mut((6, 0), (3, 4)).copy_from(&torque);
        for j in 0..4 {
            h[(11, j)] = mix[(0, j)] / self.mass;
        }
        h
    }

    fn linearize(&self, s: &HybridState, _u: &DVector<f64>, t: f64) -> Linearization {
        let w = Self::omega(s);
        let v = Self::velocity(s);
        let r = s.g.rotation3();
        let j = self.jdiag();
        let mut a = DMatrix::zeros(12, 12);
        // group block: D_g xi = 0, leaving -ad_xi
        let (xi, _) = self.drift(s, t);
        a.view_mut((0, 0), (6, 6)).copy_from(&(-xi.ad().into_matrix()));
        // xi = z
        a.view_mut((0, 6), (6, 6)).fill_with_identity();
        // gravity seen in the body frame: d/ds (-g exp(-s w_eta^) R^T e3) = -g hat(R^T e3) w_eta
        let gb = r.transpose() * Vector3::z();
        a.view_mut((9, 0), (3, 3)).copy_from(&(skew3(&gb) * -GRAVITY));
        // Euler equation
        let dw = self.jinv() * (skew3(&(j * w)) - skew3(&w) * j);
        a.view_mut((6, 6), (3, 3)).copy_from(&dw);
        // -w x v
        a.view_mut((9, 6), (3, 3)).copy_from(&skew3(&v));
        a.view_mut((9, 9), (3, 3)).copy_from(&(-skew3(&w)));
        Linearization { a, b: self.control_matrix(s, t) }
    }
}
