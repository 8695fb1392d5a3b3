//! Differential-flatness reference for the quadrotor.
//!
//! Position and yaw are sinusoids; the thrust direction follows from the
//! acceleration plus gravity, the attitude from the thrust direction and yaw,
//! and body rates and their derivatives from jerk and snap. Time derivatives
//! of the attitude are propagated exactly with second-order jets.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{clamp_vec, Plant, Quadrotor, Reference, ReferencePoint, GRAVITY};
use crate::error::{Error, Result};
use crate::liegroup::unskew3;

/// One sinusoid `amplitude * sin(frequency * t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
}

impl Sinusoid {
    /// The k-th time derivative.
    fn derivative(&self, t: f64, k: u32) -> f64 {
        let phase = self.frequency * t + f64::from(k) * PI / 2.0;
        self.amplitude * self.frequency.powi(k as i32) * phase.sin()
    }
}

/// Flat outputs: position per axis and yaw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinusoidOutputs {
    pub position: [Sinusoid; 3],
    pub yaw: Sinusoid,
}

impl Default for SinusoidOutputs {
    /// x = 12 sin(pi t/6), y = 8 sin(pi t/3), z = 7 sin(pi t/6), yaw = sin(t/2)/2.
    fn default() -> Self {
        let s = |amplitude, frequency| Sinusoid { amplitude, frequency };
        Self { position: [s(12.0, PI / 6.0), s(8.0, PI / 3.0), s(7.0, PI / 6.0)], yaw: s(0.5, 0.5) }
    }
}

impl SinusoidOutputs {
    fn position_derivative(&self, t: f64, k: u32) -> Vector3<f64> {
        Vector3::from_iterator(self.position.iter().map(|s| s.derivative(t, k)))
    }
}

/// Value with first and second time derivatives.
#[derive(Clone, Copy, Debug)]
struct Jet {
    v: f64,
    d1: f64,
    d2: f64,
}

/// Vector-valued [`Jet`].
#[derive(Clone, Copy, Debug)]
struct Jet3 {
    v: Vector3<f64>,
    d1: Vector3<f64>,
    d2: Vector3<f64>,
}

impl Add for Jet3 {
    type Output = Jet3;
    fn add(self, o: Jet3) -> Jet3 {
        Jet3 { v: self.v + o.v, d1: self.d1 + o.d1, d2: self.d2 + o.d2 }
    }
}

impl Sub for Jet3 {
    type Output = Jet3;
    fn sub(self, o: Jet3) -> Jet3 {
        Jet3 { v: self.v - o.v, d1: self.d1 - o.d1, d2: self.d2 - o.d2 }
    }
}

impl Mul<f64> for Jet3 {
    type Output = Jet3;
    fn mul(self, s: f64) -> Jet3 {
        Jet3 { v: self.v * s, d1: self.d1 * s, d2: self.d2 * s }
    }
}

impl Jet3 {
    fn cross(&self, o: &Jet3) -> Jet3 {
        Jet3 {
            v: self.v.cross(&o.v),
            d1: self.d1.cross(&o.v) + self.v.cross(&o.d1),
            d2: self.d2.cross(&o.v) + self.d1.cross(&o.d1) * 2.0 + self.v.cross(&o.d2),
        }
    }

    fn norm(&self) -> Jet {
        let n = self.v.norm();
        let d1 = self.v.dot(&self.d1) / n;
        let d2 = (self.d1.dot(&self.d1) + self.v.dot(&self.d2) - d1 * d1) / n;
        Jet { v: n, d1, d2 }
    }

    fn normalize(&self) -> (Jet3, f64) {
        let n = self.norm();
        let q = self.v / n.v;
        let q1 = (self.d1 - q * n.d1) / n.v;
        let q2 = (self.d2 - q1 * (2.0 * n.d1) - q * n.d2) / n.v;
        (Jet3 { v: q, d1: q1, d2: q2 }, n.v)
    }
}

/// Flatness-based reference for [`Quadrotor`] tracking.
#[derive(Clone, Debug)]
pub struct FlatReference {
    quad: Quadrotor,
    outputs: SinusoidOutputs,
}

impl FlatReference {
    pub fn new(quad: Quadrotor, outputs: SinusoidOutputs) -> Self {
        Self { quad, outputs }
    }

    pub fn outputs(&self) -> &SinusoidOutputs {
        &self.outputs
    }

    /// Attitude, body rates and body angular acceleration at `t`, plus thrust magnitude.
    #[allow(clippy::type_complexity)]
    fn attitude(&self, t: f64) -> Result<(Matrix3<f64>, Vector3<f64>, Vector3<f64>, f64)> {
        let o = &self.outputs;
        let thrust = Jet3 {
            v: o.position_derivative(t, 2) + Vector3::z() * GRAVITY,
            d1: o.position_derivative(t, 3),
            d2: o.position_derivative(t, 4),
        };
        if thrust.v.norm() < 1e-6 {
            return Err(Error::InvalidArgument(format!("flatness map singular at t = {t}: commanded thrust vanishes")));
        }
        let (zb, accel) = thrust.normalize();
        let (a, a1, a2) = (o.yaw.derivative(t, 0), o.yaw.derivative(t, 1), o.yaw.derivative(t, 2));
        let (s, c) = a.sin_cos();
        let heading = Jet3 {
            v: Vector3::new(c, s, 0.0),
            d1: Vector3::new(-s, c, 0.0) * a1,
            d2: Vector3::new(-c, -s, 0.0) * (a1 * a1) + Vector3::new(-s, c, 0.0) * a2,
        };
        let y_raw = zb.cross(&heading);
        if y_raw.v.norm() < 1e-9 {
            return Err(Error::InvalidArgument(format!("flatness map singular at t = {t}: thrust along heading")));
        }
        let (yb, _) = y_raw.normalize();
        let xb = yb.cross(&zb);
        let cols = |f: fn(&Jet3) -> Vector3<f64>| Matrix3::from_columns(&[f(&xb), f(&yb), f(&zb)]);
        let r = cols(|j| j.v);
        let r1 = cols(|j| j.d1);
        let r2 = cols(|j| j.d2);
        // R' = R W  and  W' = R'^T R' + R^T R''
        let w = unskew3(&(r.transpose() * r1));
        let wdot = unskew3(&(r1.transpose() * r1 + r.transpose() * r2));
        Ok((r, w, wdot, self.quad.mass * accel))
    }
}

impl Reference for FlatReference {
    fn at(&self, t: f64) -> Result<ReferencePoint> {
        let (r, w, wdot, thrust) = self.attitude(t)?;
        let p = self.outputs.position_derivative(t, 0);
        let v = r.transpose() * self.outputs.position_derivative(t, 1);
        let j = Matrix3::from_diagonal(&self.quad.inertia);
        // J w' = M + J w x w
        let torque = j * wdot - (j * w).cross(&w);
        let w_ff = self.quad.inputs_for(thrust, &torque);
        let u_ff = clamp_vec(&w_ff, self.quad.u_min(), self.quad.u_max());
        Ok(ReferencePoint { t, state: Quadrotor::state(&r, &p, &w, &v), u_ff })
    }
}

/// Unclamped feedforward, for tests that check the flatness map itself.
#[cfg(test)]
pub(crate) fn raw_feedforward(reference: &FlatReference, t: f64) -> Result<nalgebra::DVector<f64>> {
    let (_, w, wdot, thrust) = reference.attitude(t)?;
    let j = Matrix3::from_diagonal(&reference.quad.inertia);
    let torque = j * wdot - (j * w).cross(&w);
    Ok(reference.quad.inputs_for(thrust, &torque))
}
