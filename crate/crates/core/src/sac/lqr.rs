//! Infinite-horizon discrete LQR used as a terminal tracking controller.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::models::{HybridState, Plant, Reference};

/// Zero-order-hold discretization `(e^{A dt}, int_0^dt e^{A s} ds B)`.
pub fn discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (a.nrows(), b.ncols());
    let mut blk = DMatrix::zeros(n + m, n + m);
    blk.view_mut((0, 0), (n, n)).copy_from(a);
    blk.view_mut((0, n), (n, m)).copy_from(b);
    let e = (blk * dt).exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// Stabilizing solution of `P = A^T P A - A^T P B (R + B^T P B)^-1 B^T P A + Q`
/// by the structured doubling algorithm.
pub fn solve_dare(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let rinv = r.clone().try_inverse().ok_or_else(|| Error::InvalidConfig("LQR R is singular".into()))?;
    let mut ak = a.clone();
    let mut gk = b * rinv * b.transpose();
    let mut hk = q.clone();
    let eye = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let w = (&eye + &gk * &hk)
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("Riccati doubling broke down".into()))?;
        let wa = &w * &ak;
        let h_next = &hk + ak.transpose() * &hk * &wa;
        let g_next = &gk + &ak * &w * &gk * ak.transpose();
        ak = &ak * &wa;
        let delta = (&h_next - &hk).amax() / (1.0 + h_next.amax());
        hk = h_next;
        gk = g_next;
        if delta < 1e-13 {
            return Ok((&hk + hk.transpose()) * 0.5);
        }
    }
    Err(Error::InvalidConfig("Riccati iteration did not converge".into()))
}

/// Gain `K = (R + B^T P B)^-1 B^T P A` for `u = -K x`.
pub fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = solve_dare(a, b, q, r)?;
    let bt_p = b.transpose() * &p;
    let lhs = r + &bt_p * b;
    lhs.lu().solve(&(bt_p * a)).ok_or_else(|| Error::InvalidConfig("LQR gain system is singular".into()))
}

/// Where the gain comes from.
#[derive(Clone, Debug)]
enum Gain {
    Fixed(DMatrix<f64>),
    /// Re-solved about the reference point at each call.
    Frozen {
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        dt: f64,
    },
}

/// Quadrotor tracking LQR with the switching test on the tracking error.
///
/// The error is `(log(g_d^-1 g), z - z_d)`; the command `u_ff - K e` is used
/// only if `|log|^2 + |omega - omega_d|^2 + |p - p_d|^2 <= threshold` and
/// the command lies inside the input box.
#[derive(Clone, Debug)]
pub struct LqrEndgame {
    plant: Arc<dyn Plant>,
    reference: Arc<dyn Reference>,
    gain: Gain,
    threshold: f64,
}

fn check_weights(plant: &dyn Plant, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<()> {
    let n = plant.tangent_dim();
    let m = plant.u_dim();
    if q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::InvalidConfig(format!("LQR weights must be {n}x{n} and {m}x{m}")));
    }
    Ok(())
}

fn gain_at(
    plant: &dyn Plant,
    s: &HybridState,
    u: &DVector<f64>,
    t: f64,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    dt: f64,
) -> Result<DMatrix<f64>> {
    let lin = plant.linearize(s, u, t);
    let (ad, bd) = discretize(&lin.a, &lin.b, dt);
    lqr_gain(&ad, &bd, q, r)
}

impl LqrEndgame {
    /// Gains from the ZOH discretization of the dynamics linearized at `s_lin, u_lin`.
    #[allow(clippy::too_many_arguments)]
    pub fn about(
        plant: Arc<dyn Plant>,
        reference: Arc<dyn Reference>,
        s_lin: &HybridState,
        u_lin: &DVector<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        dt: f64,
        threshold: f64,
    ) -> Result<Self> {
        check_weights(plant.as_ref(), q, r)?;
        let gain = gain_at(plant.as_ref(), s_lin, u_lin, 0.0, q, r, dt)?;
        Ok(Self { plant, reference, gain: Gain::Fixed(gain), threshold })
    }

    /// Frozen-time gains: the dynamics are linearized about the reference
    /// state and feedforward at the current time and the DARE solved anew.
    pub fn frozen(
        plant: Arc<dyn Plant>,
        reference: Arc<dyn Reference>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        dt: f64,
        threshold: f64,
    ) -> Result<Self> {
        check_weights(plant.as_ref(), q, r)?;
        let lq = Self { plant, reference, gain: Gain::Frozen { q: q.clone(), r: r.clone(), dt }, threshold };
        // fail at construction rather than mid-run if the first point is not stabilizable
        lq.gain(0.0)?;
        Ok(lq)
    }

    /// Gain in force at `t`.
    pub fn gain(&self, t: f64) -> Result<DMatrix<f64>> {
        match &self.gain {
            Gain::Fixed(k) => Ok(k.clone()),
            Gain::Frozen { q, r, dt } => {
                let p = self.reference.at(t)?;
                gain_at(self.plant.as_ref(), &p.state, &p.u_ff, t, q, r, *dt)
            }
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Stacked error and the switching measure at `t`.
    pub fn tracking_error(&self, s: &HybridState, t: f64) -> Result<(DVector<f64>, f64)> {
        let r = self.reference.at(t)?;
        Self::error_of(s, &r.state)
    }

    pub(crate) fn error_of(s: &HybridState, d: &HybridState) -> Result<(DVector<f64>, f64)> {
        let e = d.g.between(&s.g)?.log()?;
        let dz = &s.z - &d.z;
        let k = e.kind().dim();
        let mut x = DVector::zeros(k + dz.len());
        x.rows_mut(0, k).copy_from(e.coords());
        x.rows_mut(k, dz.len()).copy_from(&dz);
        let dw = Vector3::new(dz[0], dz[1], dz[2]);
        let dp = s.g.translation3() - d.g.translation3();
        Ok((x, e.coords().norm_squared() + dw.norm_squared() + dp.norm_squared()))
    }

    /// The LQR command, or `None` if the switching test declines.
    pub fn command(&self, s: &HybridState, t: f64) -> Result<Option<DVector<f64>>> {
        let r = self.reference.at(t)?;
        let (e, measure) = match Self::error_of(s, &r.state) {
            Ok(v) => v,
            Err(Error::BranchCut { .. }) => return Ok(None),
            Err(err) => return Err(err),
        };
        if measure > self.threshold {
            return Ok(None);
        }
        let k = match &self.gain {
            Gain::Fixed(k) => k.clone(),
            Gain::Frozen { q, r: rw, dt } => gain_at(self.plant.as_ref(), &r.state, &r.u_ff, t, q, rw, *dt)?,
        };
        let u = r.u_ff - k * e;
        let (lo, hi) = (self.plant.u_min(), self.plant.u_max());
        let inside = u.iter().zip(lo.iter().zip(hi.iter())).all(|(x, (l, h))| l <= x && x <= h);
        Ok(inside.then_some(u))
    }
}
