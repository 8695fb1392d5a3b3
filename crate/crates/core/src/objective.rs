//! Quadratic costs built from the group logarithm.
//!
//! The stage cost is `1/2 |log(g_d^-1 g)|_M^2 + 1/2 |z - z_d|_Q^2`. Its
//! gradient with respect to a right perturbation `g exp(eta)` is
//! `dexp^-1(-e)^T M e` with `e = log(g_d^-1 g)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{AlgebraVector, GroupKind};
use crate::models::{HybridState, Reference, Trajectory};

/// Random off-diagonal jitter for the group weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightPerturbation {
    pub epsilon: f64,
    pub interval_steps: u64,
    pub seed: u64,
}

impl Default for WeightPerturbation {
    fn default() -> Self {
        Self { epsilon: 0.05, interval_steps: 25, seed: 0 }
    }
}

/// Log-quadratic running and terminal cost around a reference.
#[derive(Clone, Debug)]
pub struct QuadraticLieCost {
    kind: GroupKind,
    reference: Arc<dyn Reference>,
    m: DMatrix<f64>,
    q_z: DMatrix<f64>,
    p_terminal: DMatrix<f64>,
    perturbation: WeightPerturbation,
}

fn is_symmetric(a: &DMatrix<f64>) -> bool {
    a.is_square() && (a - a.transpose()).amax() <= 1e-12 * (1.0 + a.amax())
}

fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        // no auxiliary states
        return f64::INFINITY;
    }
    a.clone().symmetric_eigenvalues().min()
}

impl QuadraticLieCost {
    /// `m` weights the algebra error, `q_z` the auxiliary error and
    /// `p_terminal` the stacked terminal error.
    pub fn new(
        kind: GroupKind,
        reference: Arc<dyn Reference>,
        m: DMatrix<f64>,
        q_z: DMatrix<f64>,
        p_terminal: DMatrix<f64>,
    ) -> Result<Self> {
        let d = kind.dim();
        if m.shape() != (d, d) || !is_symmetric(&m) {
            return Err(Error::InvalidConfig(format!("M must be a symmetric {d}x{d} matrix")));
        }
        if min_eigenvalue(&m) <= 0.0 {
            return Err(Error::InvalidConfig("M must be positive definite".into()));
        }
        let k = q_z.nrows();
        if !is_symmetric(&q_z) || min_eigenvalue(&q_z) < -1e-12 {
            return Err(Error::InvalidConfig("Q_z must be symmetric positive semidefinite".into()));
        }
        if p_terminal.shape() != (d + k, d + k) || !is_symmetric(&p_terminal) {
            return Err(Error::InvalidConfig(format!("P_terminal must be a symmetric {0}x{0} matrix", d + k)));
        }
        if min_eigenvalue(&p_terminal) < -1e-12 {
            return Err(Error::InvalidConfig("P_terminal must be positive semidefinite".into()));
        }
        Ok(Self {
            kind,
            reference,
            m,
            q_z,
            p_terminal,
            perturbation: WeightPerturbation { epsilon: 0.0, ..Default::default() },
        })
    }

    /// Enables weight perturbation; requires `epsilon < lambda_min(M) / dim`.
    pub fn with_perturbation(mut self, p: WeightPerturbation) -> Result<Self> {
        if !(p.epsilon >= 0.0) {
            return Err(Error::InvalidConfig("epsilon must be nonnegative".into()));
        }
        if p.interval_steps == 0 {
            return Err(Error::InvalidConfig("interval_steps must be positive".into()));
        }
        let bound = min_eigenvalue(&self.m) / self.kind.dim() as f64;
        if p.epsilon >= bound {
            return Err(Error::InvalidConfig(format!(
                "epsilon {} must be below lambda_min(M)/dim = {bound}",
                p.epsilon
            )));
        }
        self.perturbation = p;
        Ok(self)
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn perturbation(&self) -> &WeightPerturbation {
        &self.perturbation
    }

    pub fn reference(&self) -> &Arc<dyn Reference> {
        &self.reference
    }

    /// Copy with `M` replaced (used for perturbed weights).
    pub fn with_weight(&self, m: DMatrix<f64>) -> Self {
        Self { m, ..self.clone() }
    }

    /// The base weight plus the symmetric jitter drawn for the block
    /// containing `step_index`. Deterministic in `(seed, step_index / interval_steps)`.
    pub fn perturb_weights(&self, step_index: u64) -> DMatrix<f64> {
        let p = &self.perturbation;
        let mut m = self.m.clone();
        if p.epsilon == 0.0 {
            return m;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        rng.set_stream(step_index / p.interval_steps);
        let d = self.kind.dim();
        for i in 0..d {
            for j in i + 1..d {
                let x = rng.gen_range(-p.epsilon..=p.epsilon);
                m[(i, j)] += x;
                m[(j, i)] += x;
            }
        }
        m
    }

    /// Stacked error `(log(g_d^-1 g), z - z_d)` at time `t`.
    pub fn error(&self, s: &HybridState, t: f64) -> Result<(AlgebraVector, DVector<f64>)> {
        let r = self.reference.at(t)?;
        let e = r.state.g.between(&s.g)?.log()?;
        Ok((e, &s.z - &r.state.z))
    }

    pub fn stage_cost(&self, s: &HybridState, t: f64) -> Result<f64> {
        let (e, dz) = self.error(s, t)?;
        let e = e.coords();
        Ok(0.5 * (e.dot(&(&self.m * e)) + dz.dot(&(&self.q_z * &dz))))
    }

    /// Gradient covector on `(eta, dz)`.
    pub fn stage_gradient(&self, s: &HybridState, t: f64) -> Result<DVector<f64>> {
        let (e, dz) = self.error(s, t)?;
        let d = self.kind.dim();
        let mut out = DVector::zeros(d + dz.len());
        let j = e.neg().dexp_inv()?;
        out.rows_mut(0, d).copy_from(&(j.matrix().transpose() * (&self.m * e.coords())));
        out.rows_mut(d, dz.len()).copy_from(&(&self.q_z * &dz));
        Ok(out)
    }

    fn stacked_error(&self, s: &HybridState, t: f64) -> Result<(AlgebraVector, DVector<f64>)> {
        let (e, dz) = self.error(s, t)?;
        let d = self.kind.dim();
        let mut x = DVector::zeros(d + dz.len());
        x.rows_mut(0, d).copy_from(e.coords());
        x.rows_mut(d, dz.len()).copy_from(&dz);
        Ok((e, x))
    }

    pub fn terminal_cost(&self, s: &HybridState, t: f64) -> Result<f64> {
        if self.p_terminal.amax() == 0.0 {
            return Ok(0.0);
        }
        let (_, x) = self.stacked_error(s, t)?;
        Ok(0.5 * x.dot(&(&self.p_terminal * &x)))
    }

    pub fn terminal_gradient(&self, s: &HybridState, t: f64) -> Result<DVector<f64>> {
        let n = self.kind.dim() + s.z.len();
        if self.p_terminal.amax() == 0.0 {
            return Ok(DVector::zeros(n));
        }
        let (e, x) = self.stacked_error(s, t)?;
        let mut grad = &self.p_terminal * &x;
        let d = self.kind.dim();
        let j = e.neg().dexp_inv()?;
        let g = j.matrix().transpose() * grad.rows(0, d);
        grad.rows_mut(0, d).copy_from(&g);
        Ok(grad)
    }

    /// Trapezoidal integral of the stage cost plus the terminal cost.
    pub fn total_objective(&self, traj: &Trajectory) -> Result<f64> {
        if traj.is_empty() {
            return Err(Error::InvalidArgument("empty trajectory".into()));
        }
        let mut prev = self.stage_cost(&traj.states[0], traj.times[0])?;
        let mut sum = 0.0;
        for k in 1..traj.len() {
            let c = self.stage_cost(&traj.states[k], traj.times[k])?;
            sum += 0.5 * (traj.times[k] - traj.times[k - 1]) * (prev + c);
            prev = c;
        }
        let last = traj.len() - 1;
        Ok(sum + self.terminal_cost(&traj.states[last], traj.times[last])?)
    }
}
