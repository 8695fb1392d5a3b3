//! Fourth-order Runge-Kutta-Munthe-Kaas integration.
//!
//! The pose is advanced as `g exp(Theta)` where `Theta` solves
//! `Theta' = dexp^-1(-Theta) xi(g exp(Theta))`; the auxiliary state uses
//! classical RK4 on the same stages.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::liegroup::AlgebraVector;
use crate::models::{HybridState, Plant};

/// One RK-MK4 step of length `h` from time `t`. The control is sampled at the
/// start, midpoint and (left limit of the) end of the step.
pub fn rkmk4_step<P: Plant + ?Sized>(
    plant: &P,
    s: &HybridState,
    t: f64,
    h: f64,
    u: [&DVector<f64>; 3],
) -> Result<HybridState> {
    let kind = plant.kind();
    let d = kind.dim();
    let stage = |theta: &DVector<f64>, dz: &DVector<f64>, tt: f64, uu: &DVector<f64>| -> Result<DVector<f64>> {
        let th = AlgebraVector::from_raw(kind, theta.clone());
        let g = s.g.compose(&th.exp())?;
        let st = HybridState::new(g, &s.z + dz);
        let mut r = plant.rates(&st, uu, tt);
        let corr = th.neg().dexp_inv()?.matrix() * r.rows(0, d);
        r.rows_mut(0, d).copy_from(&corr);
        Ok(r)
    };
    let n = plant.tangent_dim();
    let zero = DVector::zeros(n);
    let split = |x: &DVector<f64>| (x.rows(0, d).into_owned(), x.rows(d, n - d).into_owned());
    let k1 = stage(&zero.rows(0, d).into_owned(), &zero.rows(d, n - d).into_owned(), t, u[0])?;
    let (a, b) = split(&(&k1 * (0.5 * h)));
    let k2 = stage(&a, &b, t + 0.5 * h, u[1])?;
    let (a, b) = split(&(&k2 * (0.5 * h)));
    let k3 = stage(&a, &b, t + 0.5 * h, u[1])?;
    let (a, b) = split(&(&k3 * h));
    let k4 = stage(&a, &b, t + h, u[2])?;
    let inc = (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
    let (theta, dz) = split(&inc);
    let g = s.g.compose(&AlgebraVector::from_raw(kind, theta).exp())?;
    let mut out = HybridState::new(g, &s.z + dz);
    plant.project(&mut out);
    if !out.is_finite() {
        return Err(Error::Divergence { t: t + h, what: "integrated state".into() });
    }
    Ok(out)
}

/// One step with the control held constant.
pub fn integrate_step<P: Plant + ?Sized>(
    plant: &P,
    s: &HybridState,
    u: &DVector<f64>,
    t: f64,
    dt: f64,
) -> Result<HybridState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
    }
    rkmk4_step(plant, s, t, dt, [u, u, u])
}
