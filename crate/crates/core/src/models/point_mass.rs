use nalgebra::{DMatrix, DVector};

use super::{HybridState, Linearization, Plant};
use crate::error::{Error, Result};
use crate::liegroup::{AlgebraVector, GroupElement, GroupKind};

/// Damped double integrator confined to the translation subgroup of SE(2) or SE(3).
///
/// `z` is the velocity, `xi = (0, z)` and `z' = u - c z`. The pose never
/// rotates, so this is the abelian special case of every algorithm in the crate.
#[derive(Clone, Debug)]
pub struct PointMass {
    kind: GroupKind,
    damping: f64,
    u_min: DVector<f64>,
    u_max: DVector<f64>,
}

impl PointMass {
    pub fn new(kind: GroupKind, damping: f64) -> Result<Self> {
        let k = Self::translation_dim(kind)?;
        Ok(Self { kind, damping, u_min: DVector::from_element(k, -1.0), u_max: DVector::from_element(k, 1.0) })
    }

    pub fn with_bounds(mut self, u_min: DVector<f64>, u_max: DVector<f64>) -> Result<Self> {
        super::check_bounds(&u_min, &u_max)?;
        if u_min.len() != self.u_min.len() {
            return Err(Error::InvalidConfig("point mass bound dimension".into()));
        }
        self.u_min = u_min;
        self.u_max = u_max;
        Ok(self)
    }

    fn translation_dim(kind: GroupKind) -> Result<usize> {
        match kind {
            GroupKind::SE2 => Ok(2),
            GroupKind::SE3 => Ok(3),
            GroupKind::SO3 => Err(Error::InvalidConfig("SO(3) has no translations".into())),
        }
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    fn rot_dim(&self) -> usize {
        self.kind.dim() - self.z_dim()
    }

    /// State at position `p` with velocity `v`.
    pub fn state(&self, p: &[f64], v: &[f64]) -> HybridState {
        let g = match self.kind {
            GroupKind::SE2 => GroupElement::se2(0.0, p[0], p[1]),
            _ => GroupElement::se3(&nalgebra::Matrix3::identity(), &nalgebra::Vector3::new(p[0], p[1], p[2])),
        };
        HybridState::new(g, DVector::from_column_slice(v))
    }
}

impl Plant for PointMass {
    fn kind(&self) -> GroupKind {
        self.kind
    }

    fn z_dim(&self) -> usize {
        self.u_min.len()
    }

    fn u_dim(&self) -> usize {
        self.u_min.len()
    }

    fn u_min(&self) -> &DVector<f64> {
        &self.u_min
    }

    fn u_max(&self) -> &DVector<f64> {
        &self.u_max
    }

    fn drift(&self, s: &HybridState, _t: f64) -> (AlgebraVector, DVector<f64>) {
        let mut xi = DVector::zeros(self.kind.dim());
        xi.rows_mut(self.rot_dim(), self.z_dim()).copy_from(&s.z);
        (AlgebraVector::from_raw(self.kind, xi), &s.z * -self.damping)
    }

    fn control_matrix(&self, _s: &HybridState, _t: f64) -> DMatrix<f64> {
        let k = self.z_dim();
        let mut h = DMatrix::zeros(self.tangent_dim(), k);
        h.view_mut((self.kind.dim(), 0), (k, k)).fill_with_identity();
        h
    }

    fn linearize(&self, s: &HybridState, _u: &DVector<f64>, t: f64) -> Linearization {
        let k = self.z_dim();
        let d = self.kind.dim();
        let mut a = DMatrix::zeros(d + k, d + k);
        let (xi, _) = self.drift(s, t);
        a.view_mut((0, 0), (d, d)).copy_from(&(-xi.ad().into_matrix()));
        a.view_mut((self.rot_dim(), d), (k, k)).fill_with_identity();
        a.view_mut((d, d), (k, k)).fill_diagonal(-self.damping);
        Linearization { a, b: self.control_matrix(s, t) }
    }
}
