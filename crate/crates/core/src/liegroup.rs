//! Matrix Lie groups SO(3), SE(2) and SE(3).
//!
//! Group elements are homogeneous matrices; the public interface is in
//! minimal coordinates:
//!
//! * SO(3): `omega`
//! * SE(2): `(omega, u, v)` with `xi = [[0, -omega, u], [omega, 0, v], [0, 0, 0]]`
//! * SE(3): `(omega, v)`, body angular velocity first
//!
//! `dexp` is the trivialized tangent of the exponential in the convention
//! `dexp(x) = sum_j ad_x^j / (j+1)!`, so that
//! `exp(x)^-1 * exp(x + s*eta) = exp(s * dexp(-x) * eta + O(s^2))`.
//! All closed forms are exact; each scalar coefficient switches to its Taylor
//! series below [`SERIES_THRESHOLD`] where the closed form is 0/0.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rotation magnitude below which closed-form coefficients are replaced by
/// their Taylor series (truncation error below 1e-17 at the threshold).
pub const SERIES_THRESHOLD: f64 = 0.1;

/// Distance to pi at which `log` refuses to pick a branch.
pub const BRANCH_MARGIN: f64 = 1e-6;

/// Tolerance used when validating rotation blocks.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    SO3,
    SE2,
    SE3,
}

impl GroupKind {
    /// Dimension of the Lie algebra.
    pub fn dim(self) -> usize {
        match self {
            GroupKind::SO3 | GroupKind::SE2 => 3,
            GroupKind::SE3 => 6,
        }
    }

    /// Side length of the matrix representation.
    pub fn matrix_size(self) -> usize {
        match self {
            GroupKind::SO3 | GroupKind::SE2 => 3,
            GroupKind::SE3 => 4,
        }
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GroupKind::SO3 => "SO(3)",
            GroupKind::SE2 => "SE(2)",
            GroupKind::SE3 => "SE(3)",
        };
        f.write_str(name)
    }
}

// ---------------------------------------------------------------------------
// scalar coefficients

fn horner(t2: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t2 + c)
}

/// sin(t)/t
fn sinc(t: f64) -> f64 {
    if t.abs() < SERIES_THRESHOLD {
        horner(t * t, &[1.0, -1.0 / 6.0, 1.0 / 120.0, -1.0 / 5040.0, 1.0 / 362880.0, -1.0 / 39916800.0])
    } else {
        t.sin() / t
    }
}

/// (1 - cos t)/t^2
fn cosc(t: f64) -> f64 {
    if t.abs() < SERIES_THRESHOLD {
        horner(t * t, &[0.5, -1.0 / 24.0, 1.0 / 720.0, -1.0 / 40320.0, 1.0 / 3628800.0, -1.0 / 479001600.0])
    } else {
        let h = (0.5 * t).sin();
        2.0 * h * h / (t * t)
    }
}

/// (t - sin t)/t^3
fn sinc3(t: f64) -> f64 {
    if t.abs() < SERIES_THRESHOLD {
        horner(t * t, &[1.0 / 6.0, -1.0 / 120.0, 1.0 / 5040.0, -1.0 / 362880.0, 1.0 / 39916800.0, -1.0 / 6227020800.0])
    } else {
        (t - t.sin()) / (t * t * t)
    }
}

/// (2 - 2 cos t - t sin t / 2)/t^2
fn se3_dexp_v(t: f64) -> f64 {
    if t.abs() < SERIES_THRESHOLD {
        horner(t * t, &[0.5, 0.0, -1.0 / 720.0, 1.0 / 20160.0, -1.0 / 1209600.0, 1.0 / 119750400.0])
    } else {
        (2.0 - 2.0 * t.cos() - 0.5 * t * t.sin()) / (t * t)
    }
}

/// (1 - cos t - t sin t / 2)/t^4
fn se3_dexp_quartic(t: f64) -> f64 {
    if t.abs() < SERIES_THRESHOLD {
        horner(
            t * t,
            &[1.0 / 24.0, -1.0 / 360.0, 1.0 / 13440.0, -1.0 / 907200.0, 1.0 / 95800320.0, -1.0 / 14529715200.0],
        )
    } else {
        (1.0 - t.cos() - 0.5 * t * t.sin()) / t.powi(4)
    }
}

/// (t - 3 sin t / 2 + t cos t / 2)/t^5
fn se3_dexp_quintic(t: f64) -> f64 {
    if t.abs() < SERIES_THRESHOLD {
        horner(
            t * t,
            &[1.0 / 120.0, -1.0 / 2520.0, 1.0 / 120960.0, -1.0 / 9979200.0, 1.0 / 1245404160.0, -1.0 / 217945728000.0],
        )
    } else {
        (t - 1.5 * t.sin() + 0.5 * t * t.cos()) / t.powi(5)
    }
}

/// (t sin t / 2 + cos t - 1)/(t^2 (cos t - 1))
fn dexpinv_quadratic(t: f64) -> f64 {
    if t.abs() < SERIES_THRESHOLD {
        horner(
            t * t,
            &[1.0 / 12.0, 1.0 / 720.0, 1.0 / 30240.0, 1.0 / 1209600.0, 1.0 / 47900160.0, 691.0 / 1307674368000.0],
        )
    } else {
        (0.5 * t * t.sin() + t.cos() - 1.0) / (t * t * (t.cos() - 1.0))
    }
}

/// (t^2/4 + t sin t / 4 + cos t - 1)/(t^4 (cos t - 1))
fn dexpinv_quartic(t: f64) -> f64 {
    if t.abs() < SERIES_THRESHOLD {
        horner(
            t * t,
            &[
                -1.0 / 720.0,
                -1.0 / 15120.0,
                -1.0 / 403200.0,
                -1.0 / 11975040.0,
                -691.0 / 261534873600.0,
                -1.0 / 12454041600.0,
            ],
        )
    } else {
        (0.25 * t * t + 0.25 * t * t.sin() + t.cos() - 1.0) / (t.powi(4) * (t.cos() - 1.0))
    }
}

/// (t/2) sin t / (1 - cos t)
fn half_cot(t: f64) -> f64 {
    if t.abs() < SERIES_THRESHOLD {
        horner(t * t, &[1.0, -1.0 / 12.0, -1.0 / 720.0, -1.0 / 30240.0, -1.0 / 1209600.0, -1.0 / 47900160.0])
    } else {
        0.5 * t * t.sin() / (1.0 - t.cos())
    }
}

/// t / (2 sin t)
fn log_scale(t: f64) -> f64 {
    if t.abs() < SERIES_THRESHOLD {
        horner(t * t, &[0.5, 1.0 / 12.0, 7.0 / 720.0, 31.0 / 30240.0, 127.0 / 1209600.0, 73.0 / 6842880.0])
    } else {
        t / (2.0 * t.sin())
    }
}

// ---------------------------------------------------------------------------
// small fixed-size helpers

pub(crate) fn skew3(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
}

pub(crate) fn unskew3(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

const J2: Matrix2<f64> = Matrix2::new(0.0, -1.0, 1.0, 0.0);

fn rot2(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// `I + cosc * W + sinc3 * W^2`, the SO(3) left Jacobian.
fn so3_dexp(w: &Vector3<f64>) -> Matrix3<f64> {
    let t = w.norm();
    let wh = skew3(w);
    Matrix3::identity() + wh * cosc(t) + wh * wh * sinc3(t)
}

fn so3_dexpinv(w: &Vector3<f64>) -> Matrix3<f64> {
    let t = w.norm();
    let wh = skew3(w);
    Matrix3::identity() - wh * 0.5 + wh * wh * dexpinv_quadratic(t)
}

fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let t = w.norm();
    let wh = skew3(w);
    Matrix3::identity() + wh * sinc(t) + wh * wh * cosc(t)
}

fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let axis = unskew3(&(r - r.transpose()));
    let s = 0.5 * axis.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let angle = s.atan2(c);
    if angle >= std::f64::consts::PI - BRANCH_MARGIN {
        return Err(Error::BranchCut { angle });
    }
    Ok(axis * log_scale(angle))
}

/// SE(2) `V(omega)` translation block of exp and dexp.
fn se2_v(omega: f64) -> Matrix2<f64> {
    Matrix2::identity() * sinc(omega) + J2 * (omega * cosc(omega))
}

/// Inverse of [`se2_v`]; translation block of dexp^-1.
fn se2_vinv(omega: f64) -> Matrix2<f64> {
    Matrix2::identity() * half_cot(omega) - J2 * (0.5 * omega)
}

// ---------------------------------------------------------------------------
// algebra vectors

/// Minimal-coordinate element of the Lie algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraVector {
    kind: GroupKind,
    coords: DVector<f64>,
}

impl AlgebraVector {
    pub fn new(kind: GroupKind, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != kind.dim() {
            return Err(Error::InvalidArgument(format!(
                "{kind} algebra vector needs {} coordinates, got {}",
                kind.dim(),
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite algebra coordinate".into()));
        }
        Ok(Self { kind, coords })
    }

    pub fn from_slice(kind: GroupKind, coords: &[f64]) -> Result<Self> {
        Self::new(kind, DVector::from_column_slice(coords))
    }

    pub fn zeros(kind: GroupKind) -> Self {
        Self { kind, coords: DVector::zeros(kind.dim()) }
    }

    pub(crate) fn from_raw(kind: GroupKind, coords: DVector<f64>) -> Self {
        debug_assert_eq!(coords.len(), kind.dim());
        Self { kind, coords }
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { kind: self.kind, coords: &self.coords * s }
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// Norm of the rotational part (`|omega|`).
    pub fn rotation_norm(&self) -> f64 {
        match self.kind {
            GroupKind::SO3 | GroupKind::SE3 => self.omega3().norm(),
            GroupKind::SE2 => self.coords[0].abs(),
        }
    }

    fn omega3(&self) -> Vector3<f64> {
        Vector3::new(self.coords[0], self.coords[1], self.coords[2])
    }

    fn v3(&self) -> Vector3<f64> {
        Vector3::new(self.coords[3], self.coords[4], self.coords[5])
    }

    /// The matrix of this element in the Lie algebra.
    pub fn hat(&self) -> DMatrix<f64> {
        let c = &self.coords;
        match self.kind {
            GroupKind::SO3 => to_dyn3(&skew3(&self.omega3())),
            GroupKind::SE2 => DMatrix::from_row_slice(3, 3, &[0.0, -c[0], c[1], c[0], 0.0, c[2], 0.0, 0.0, 0.0]),
            GroupKind::SE3 => {
                let mut m = DMatrix::zeros(4, 4);
                m.view_mut((0, 0), (3, 3)).copy_from(&skew3(&self.omega3()));
                m.view_mut((0, 3), (3, 1)).copy_from(&self.v3());
                m
            }
        }
    }

    /// Matrix of `ad_x`, i.e. `ad(x) * y = [x, y]` in coordinates.
    pub fn ad(&self) -> AlgebraMatrix {
        let c = &self.coords;
        let m = match self.kind {
            GroupKind::SO3 => to_dyn3(&skew3(&self.omega3())),
            GroupKind::SE2 => DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, c[2], 0.0, -c[0], -c[1], c[0], 0.0]),
            GroupKind::SE3 => {
                let w = skew3(&self.omega3());
                let v = skew3(&self.v3());
                block6(&w, &Matrix3::zeros(), &v, &w)
            }
        };
        AlgebraMatrix { kind: self.kind, matrix: m }
    }

    pub fn exp(&self) -> GroupElement {
        let c = &self.coords;
        let matrix = match self.kind {
            GroupKind::SO3 => to_dyn3(&so3_exp(&self.omega3())),
            GroupKind::SE2 => {
                let r = rot2(c[0]);
                let p = se2_v(c[0]) * Vector2::new(c[1], c[2]);
                se2_matrix(&r, &p)
            }
            GroupKind::SE3 => {
                let w = self.omega3();
                let r = so3_exp(&w);
                let p = so3_dexp(&w) * self.v3();
                se3_matrix(&r, &p)
            }
        };
        GroupElement { kind: self.kind, matrix }
    }

    /// Trivialized tangent of the exponential map.
    pub fn dexp(&self) -> AlgebraMatrix {
        let c = &self.coords;
        let m = match self.kind {
            GroupKind::SO3 => to_dyn3(&so3_dexp(&self.omega3())),
            GroupKind::SE2 => {
                let (w, u, v) = (c[0], c[1], c[2]);
                // entries #1 and #2
                let a = w * sinc3(w);
                let b = cosc(w);
                let e1 = u * a + v * b;
                let e2 = v * a - u * b;
                let blk = se2_v(w);
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[1.0, 0.0, 0.0, e1, blk[(0, 0)], blk[(0, 1)], e2, blk[(1, 0)], blk[(1, 1)]],
                )
            }
            GroupKind::SE3 => {
                let w = self.omega3();
                let t = w.norm();
                let wh = skew3(&w);
                let vh = skew3(&self.v3());
                let b1 = so3_dexp(&w);
                let w2 = wh * wh;
                let b2 = vh * se3_dexp_v(t)
                    + (wh * vh + vh * wh) * sinc3(t)
                    + (w2 * vh + wh * vh * wh + vh * w2) * se3_dexp_quartic(t)
                    + (w2 * vh * wh + wh * vh * w2) * se3_dexp_quintic(t);
                block6(&b1, &Matrix3::zeros(), &b2, &b1)
            }
        };
        AlgebraMatrix { kind: self.kind, matrix: m }
    }

    /// Inverse of [`dexp`](Self::dexp). Singular at `|omega| = 2*pi`.
    pub fn dexp_inv(&self) -> Result<AlgebraMatrix> {
        let norm = self.rotation_norm();
        if norm >= 2.0 * std::f64::consts::PI - BRANCH_MARGIN {
            return Err(Error::Singularity { norm });
        }
        let c = &self.coords;
        let m = match self.kind {
            GroupKind::SO3 => to_dyn3(&so3_dexpinv(&self.omega3())),
            GroupKind::SE2 => {
                let (w, u, v) = (c[0], c[1], c[2]);
                // entries #3 and #4
                let k = 2.0 * w * dexpinv_quadratic(w);
                let e3 = -0.5 * v + 0.5 * u * k;
                let e4 = 0.5 * u + 0.5 * v * k;
                let blk = se2_vinv(w);
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[1.0, 0.0, 0.0, e3, blk[(0, 0)], blk[(0, 1)], e4, blk[(1, 0)], blk[(1, 1)]],
                )
            }
            GroupKind::SE3 => {
                let w = self.omega3();
                let t = w.norm();
                let wh = skew3(&w);
                let vh = skew3(&self.v3());
                let b3 = so3_dexpinv(&w);
                let w2 = wh * wh;
                let b4 = vh * -0.5
                    + (wh * vh + vh * wh) * dexpinv_quadratic(t)
                    + (w2 * vh * wh + wh * vh * w2) * dexpinv_quartic(t);
                block6(&b3, &Matrix3::zeros(), &b4, &b3)
            }
        };
        Ok(AlgebraMatrix { kind: self.kind, matrix: m })
    }
}

/// Coordinates of an algebra matrix. Fails when the matrix is not in the algebra's shape.
pub fn vee(kind: GroupKind, m: &DMatrix<f64>) -> Result<AlgebraVector> {
    let n = kind.matrix_size();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "{kind} vee expects a {n}x{n} matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let coords = match kind {
        GroupKind::SO3 => vec![m[(2, 1)], m[(0, 2)], m[(1, 0)]],
        GroupKind::SE2 => vec![m[(1, 0)], m[(0, 2)], m[(1, 2)]],
        GroupKind::SE3 => vec![m[(2, 1)], m[(0, 2)], m[(1, 0)], m[(0, 3)], m[(1, 3)], m[(2, 3)]],
    };
    AlgebraVector::from_slice(kind, &coords)
}

/// A linear map on algebra coordinates (dexp, ad, Ad, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraMatrix {
    kind: GroupKind,
    matrix: DMatrix<f64>,
}

impl AlgebraMatrix {
    pub fn new(kind: GroupKind, matrix: DMatrix<f64>) -> Result<Self> {
        let d = kind.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::InvalidArgument(format!("{kind} algebra matrix must be {d}x{d}")));
        }
        Ok(Self { kind, matrix })
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn apply(&self, x: &AlgebraVector) -> AlgebraVector {
        AlgebraVector::from_raw(self.kind, &self.matrix * &x.coords)
    }

    pub fn transpose(&self) -> Self {
        Self { kind: self.kind, matrix: self.matrix.transpose() }
    }
}

// ---------------------------------------------------------------------------
// group elements

/// A point on SO(3), SE(2) or SE(3), stored as its matrix representation.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    kind: GroupKind,
    matrix: DMatrix<f64>,
}

impl GroupElement {
    /// Wraps a matrix after checking group membership.
    pub fn new(kind: GroupKind, matrix: DMatrix<f64>) -> Result<Self> {
        let n = kind.matrix_size();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::InvalidArgument(format!("{kind} element must be {n}x{n}")));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite group element".into()));
        }
        let g = Self { kind, matrix };
        let defect = g.orthogonality_defect();
        if defect > MEMBERSHIP_TOL {
            return Err(Error::InvalidArgument(format!("rotation block not orthogonal (defect {defect:e})")));
        }
        let r = g.rotation_dmatrix();
        if (r.determinant() - 1.0).abs() > MEMBERSHIP_TOL {
            return Err(Error::InvalidArgument("rotation block has determinant != 1".into()));
        }
        if kind != GroupKind::SO3 {
            for j in 0..n {
                let expect = if j == n - 1 { 1.0 } else { 0.0 };
                if (g.matrix[(n - 1, j)] - expect).abs() > MEMBERSHIP_TOL {
                    return Err(Error::InvalidArgument("bottom row must be [0 .. 0 1]".into()));
                }
            }
        }
        Ok(g)
    }

    pub fn identity(kind: GroupKind) -> Self {
        let n = kind.matrix_size();
        Self { kind, matrix: DMatrix::identity(n, n) }
    }

    /// Planar pose with heading `theta` and position `(x, y)`.
    pub fn se2(theta: f64, x: f64, y: f64) -> Self {
        Self { kind: GroupKind::SE2, matrix: se2_matrix(&rot2(theta), &Vector2::new(x, y)) }
    }

    /// Rigid motion from a rotation matrix and a translation. The rotation is not re-checked.
    pub fn se3(r: &Matrix3<f64>, p: &Vector3<f64>) -> Self {
        Self { kind: GroupKind::SE3, matrix: se3_matrix(r, p) }
    }

    pub fn so3(r: &Matrix3<f64>) -> Self {
        Self { kind: GroupKind::SO3, matrix: to_dyn3(r) }
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Row-major flattening of the matrix.
    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.matrix.nrows();
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|ij| self.matrix[ij]).collect()
    }

    pub fn from_row_major(kind: GroupKind, data: &[f64]) -> Result<Self> {
        let n = kind.matrix_size();
        if data.len() != n * n {
            return Err(Error::InvalidArgument(format!("{kind} needs {} entries", n * n)));
        }
        Self::new(kind, DMatrix::from_row_slice(n, n, data))
    }

    fn rot_size(&self) -> usize {
        match self.kind {
            GroupKind::SO3 | GroupKind::SE3 => 3,
            GroupKind::SE2 => 2,
        }
    }

    fn rotation_dmatrix(&self) -> DMatrix<f64> {
        let k = self.rot_size();
        self.matrix.view((0, 0), (k, k)).into_owned()
    }

    /// Rotation block of SO(3)/SE(3) elements. For SE(2) the planar rotation is embedded about e3.
    pub fn rotation3(&self) -> Matrix3<f64> {
        match self.kind {
            GroupKind::SO3 | GroupKind::SE3 => self.matrix.fixed_view::<3, 3>(0, 0).into_owned(),
            GroupKind::SE2 => {
                let mut r = Matrix3::identity();
                r.fixed_view_mut::<2, 2>(0, 0).copy_from(&self.matrix.fixed_view::<2, 2>(0, 0));
                r
            }
        }
    }

    /// Translation part (zero for SO(3); z = 0 for SE(2)).
    pub fn translation3(&self) -> Vector3<f64> {
        match self.kind {
            GroupKind::SO3 => Vector3::zeros(),
            GroupKind::SE2 => Vector3::new(self.matrix[(0, 2)], self.matrix[(1, 2)], 0.0),
            GroupKind::SE3 => self.matrix.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    /// Heading angle of an SE(2) element.
    pub fn heading(&self) -> f64 {
        self.matrix[(1, 0)].atan2(self.matrix[(0, 0)])
    }

    /// `max |R^T R - I|` of the rotation block.
    pub fn orthogonality_defect(&self) -> f64 {
        let r = self.rotation_dmatrix();
        let k = r.nrows();
        (r.transpose() * &r - DMatrix::<f64>::identity(k, k)).amax()
    }

    fn check_kind(&self, other: &Self) -> Result<()> {
        if self.kind != other.kind {
            return Err(Error::InvalidArgument(format!("group mismatch: {} vs {}", self.kind, other.kind)));
        }
        Ok(())
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_kind(other)?;
        Ok(Self { kind: self.kind, matrix: &self.matrix * &other.matrix })
    }

    pub fn inverse(&self) -> Self {
        let k = self.rot_size();
        let n = self.kind.matrix_size();
        let rt = self.matrix.view((0, 0), (k, k)).transpose();
        let mut m = DMatrix::identity(n, n);
        if self.kind != GroupKind::SO3 {
            let p = self.matrix.view((0, k), (k, 1)).into_owned();
            let q = -(&rt * p);
            m.view_mut((0, k), (k, 1)).copy_from(&q);
        }
        m.view_mut((0, 0), (k, k)).copy_from(&rt);
        Self { kind: self.kind, matrix: m }
    }

    /// `self^-1 * other`.
    pub fn between(&self, other: &Self) -> Result<Self> {
        self.inverse().compose(other)
    }

    /// Principal-branch logarithm.
    pub fn log(&self) -> Result<AlgebraVector> {
        let coords = match self.kind {
            GroupKind::SO3 => {
                let w = so3_log(&self.rotation3())?;
                DVector::from_column_slice(w.as_slice())
            }
            GroupKind::SE2 => {
                let angle = self.heading();
                if angle.abs() >= std::f64::consts::PI - BRANCH_MARGIN {
                    return Err(Error::BranchCut { angle });
                }
                let p = Vector2::new(self.matrix[(0, 2)], self.matrix[(1, 2)]);
                let q = se2_vinv(angle) * p;
                DVector::from_column_slice(&[angle, q[0], q[1]])
            }
            GroupKind::SE3 => {
                let w = so3_log(&self.rotation3())?;
                let v = so3_dexpinv(&w) * self.translation3();
                DVector::from_column_slice(&[w[0], w[1], w[2], v[0], v[1], v[2]])
            }
        };
        Ok(AlgebraVector::from_raw(self.kind, coords))
    }

    /// Matrix of the group adjoint `Ad_g`.
    pub fn adjoint(&self) -> AlgebraMatrix {
        let m = match self.kind {
            GroupKind::SO3 => self.matrix.clone(),
            GroupKind::SE2 => {
                let (px, py) = (self.matrix[(0, 2)], self.matrix[(1, 2)]);
                let mut m = DMatrix::zeros(3, 3);
                m[(0, 0)] = 1.0;
                m[(1, 0)] = py;
                m[(2, 0)] = -px;
                m.view_mut((1, 1), (2, 2)).copy_from(&self.matrix.view((0, 0), (2, 2)));
                m
            }
            GroupKind::SE3 => {
                let r = self.rotation3();
                let p = skew3(&self.translation3());
                block6(&r, &Matrix3::zeros(), &(p * r), &r)
            }
        };
        AlgebraMatrix { kind: self.kind, matrix: m }
    }

    /// `self * exp(x)`.
    pub fn retract(&self, x: &AlgebraVector) -> Result<Self> {
        self.compose(&x.exp())
    }
}

fn to_dyn3(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

fn block6(a: &Matrix3<f64>, b: &Matrix3<f64>, c: &Matrix3<f64>, d: &Matrix3<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(6, 6);
    m.view_mut((0, 0), (3, 3)).copy_from(a);
    m.view_mut((0, 3), (3, 3)).copy_from(b);
    m.view_mut((3, 0), (3, 3)).copy_from(c);
    m.view_mut((3, 3), (3, 3)).copy_from(d);
    m
}

fn se2_matrix(r: &Matrix2<f64>, p: &Vector2<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::identity(3, 3);
    m.view_mut((0, 0), (2, 2)).copy_from(r);
    m.view_mut((0, 2), (2, 1)).copy_from(p);
    m
}

fn se3_matrix(r: &Matrix3<f64>, p: &Vector3<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::identity(4, 4);
    m.view_mut((0, 0), (3, 3)).copy_from(r);
    m.view_mut((0, 3), (3, 1)).copy_from(p);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const KINDS: [GroupKind; 3] = [GroupKind::SO3, GroupKind::SE2, GroupKind::SE3];

    /// Random algebra vector whose rotational part has norm `theta`.
    fn random_with_rotation(rng: &mut ChaCha8Rng, kind: GroupKind, theta: f64) -> AlgebraVector {
        let mut c: Vec<f64> = (0..kind.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        match kind {
            GroupKind::SE2 => c[0] = if rng.gen_bool(0.5) { theta } else { -theta },
            _ => {
                let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
                for x in c.iter_mut().take(3) {
                    *x *= theta / n;
                }
            }
        }
        AlgebraVector::from_slice(kind, &c).unwrap()
    }

    fn matrix_exp_series(m: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = m.nrows();
        let mut sum = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..terms {
            term = &term * m / k as f64;
            sum += &term;
        }
        sum
    }

    fn dexp_series(x: &AlgebraVector, terms: usize) -> DMatrix<f64> {
        let ad = x.ad().into_matrix();
        let n = ad.nrows();
        let mut sum = DMatrix::zeros(n, n);
        let mut power = DMatrix::identity(n, n);
        let mut fact = 1.0;
        for j in 0..terms {
            fact *= (j + 1) as f64;
            sum += &power / fact;
            power = &power * &ad;
        }
        sum
    }

    #[test]
    fn hat_so3_matches_definition() {
        let x = AlgebraVector::from_slice(GroupKind::SO3, &[1.0, 2.0, 3.0]).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0]);
        assert_eq!(x.hat(), expect);
        assert_eq!(AlgebraVector::zeros(GroupKind::SO3).hat(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn hat_se3_pure_translation() {
        let x = AlgebraVector::from_slice(GroupKind::SE3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let m = x.hat();
        let mut expect = DMatrix::zeros(4, 4);
        expect[(0, 3)] = 1.0;
        assert_eq!(m, expect);
    }

    #[test]
    fn vee_rejects_wrong_shape() {
        assert!(vee(GroupKind::SE3, &DMatrix::zeros(3, 3)).is_err());
        assert!(AlgebraVector::from_slice(GroupKind::SE2, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn compose_inverse_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in KINDS {
            let x = random_with_rotation(&mut rng, kind, 1.3);
            let a = x.exp();
            let e = a.compose(&a.inverse()).unwrap();
            assert!((e.matrix() - GroupElement::identity(kind).matrix()).amax() < 1e-12);
            let b = random_with_rotation(&mut rng, kind, 0.4).exp();
            let ib = GroupElement::identity(kind).compose(&b).unwrap();
            assert_eq!(ib, b);
            let dense = a.matrix() * b.matrix();
            assert!((a.compose(&b).unwrap().matrix() - dense).amax() < 1e-15);
        }
        let a = GroupElement::identity(GroupKind::SE2);
        let b = GroupElement::identity(GroupKind::SE3);
        assert!(a.compose(&b).is_err());
    }

    #[test]
    fn exp_axis_aligned_rotation() {
        let th = 0.7;
        let g = AlgebraVector::from_slice(GroupKind::SO3, &[th, 0.0, 0.0]).unwrap().exp();
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, th.cos(), -th.sin(), 0.0, th.sin(), th.cos()]);
        assert!((g.matrix() - expect).amax() < 1e-15);
        let id = AlgebraVector::zeros(GroupKind::SE3).exp();
        assert_eq!(id, GroupElement::identity(GroupKind::SE3));
    }

    #[test]
    fn exp_matches_power_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in KINDS {
            for _ in 0..50 {
                let th = rng.gen_range(0.0..PI - 0.01);
                let x = random_with_rotation(&mut rng, kind, th);
                let series = matrix_exp_series(&x.hat(), 30);
                assert!((x.exp().matrix() - series).amax() < 1e-12, "{kind} th={th}");
            }
        }
    }

    #[test]
    fn log_roundtrip_and_special_cases() {
        for kind in KINDS {
            let z = GroupElement::identity(kind).log().unwrap();
            assert_eq!(z.coords().amax(), 0.0);
        }
        let g = GroupElement::se2(1.0, 0.0, 0.0);
        let x = g.log().unwrap();
        assert!((x.coords() - DVector::from_column_slice(&[1.0, 0.0, 0.0])).amax() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in KINDS {
            let x = random_with_rotation(&mut rng, kind, 0.5);
            assert!((x.exp().log().unwrap().coords() - x.coords()).amax() < 1e-10);
        }
    }

    #[test]
    fn log_rejects_branch_cut() {
        let g = GroupElement::se2(PI, 1.0, 0.0);
        assert!(matches!(g.log(), Err(Error::BranchCut { .. })));
        let r = AlgebraVector::from_slice(GroupKind::SO3, &[0.0, PI, 0.0]).unwrap().exp();
        assert!(matches!(r.log(), Err(Error::BranchCut { .. })));
    }

    #[test]
    fn ad_is_bracket() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in KINDS {
            assert_eq!(AlgebraVector::zeros(kind).ad().matrix().amax(), 0.0);
            let x = random_with_rotation(&mut rng, kind, 1.1);
            let y = random_with_rotation(&mut rng, kind, 0.8);
            let comm = x.hat() * y.hat() - y.hat() * x.hat();
            let b = vee(kind, &comm).unwrap();
            assert!((x.ad().apply(&y).coords() - b.coords()).amax() < 1e-12);
        }
        let w = AlgebraVector::from_slice(GroupKind::SO3, &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(w.ad().matrix(), &w.hat());
    }

    #[test]
    fn adjoint_conjugation_and_exp_of_ad() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in KINDS {
            let x = random_with_rotation(&mut rng, kind, 1.4);
            let g = x.exp();
            let y = random_with_rotation(&mut rng, kind, 0.6);
            let conj = g.matrix() * y.hat() * g.inverse().matrix();
            let expect = vee(kind, &conj).unwrap();
            assert!((g.adjoint().apply(&y).coords() - expect.coords()).amax() < 1e-10);
            let series = matrix_exp_series(x.ad().matrix(), 40);
            assert!((g.adjoint().matrix() - series).amax() < 1e-10);
        }
    }

    #[test]
    fn dexp_at_zero_is_identity() {
        for kind in KINDS {
            let d = kind.dim();
            let z = AlgebraVector::zeros(kind);
            assert_eq!(z.dexp().matrix(), &DMatrix::identity(d, d));
            assert_eq!(z.dexp_inv().unwrap().matrix(), &DMatrix::identity(d, d));
        }
    }

    #[test]
    fn se2_dexp_small_rotation_limit_follows_series() {
        // At omega = 0 the first column is ad/2 applied to e1, i.e. (1, v/2, -u/2).
        let x = AlgebraVector::from_slice(GroupKind::SE2, &[0.0, 1.0, 2.0]).unwrap();
        let d = x.dexp();
        assert!((d.matrix() - dexp_series(&x, 25)).amax() < 1e-15);
        assert!((d.matrix()[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((d.matrix()[(2, 0)] + 0.5).abs() < 1e-15);
        let tiny = AlgebraVector::from_slice(GroupKind::SE2, &[1e-7, 1.0, 2.0]).unwrap();
        assert!((tiny.dexp().matrix() - dexp_series(&tiny, 25)).amax() < 1e-14);
    }

    #[test]
    fn dexp_matches_series_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for kind in KINDS {
            for _ in 0..100 {
                let th = rng.gen_range(0.1..3.0);
                let x = random_with_rotation(&mut rng, kind, th);
                let d = x.dexp();
                assert!((d.matrix() - dexp_series(&x, 60)).amax() < 1e-10, "{kind} th={th}");
                let prod = x.dexp_inv().unwrap().matrix() * d.matrix();
                let eye = DMatrix::identity(kind.dim(), kind.dim());
                assert!((prod - eye).amax() < 1e-10, "{kind} th={th}");
            }
        }
    }

    #[test]
    fn coefficients_continuous_across_series_threshold() {
        let below = SERIES_THRESHOLD * (1.0 - 1e-12);
        let above = SERIES_THRESHOLD * (1.0 + 1e-12);
        let fns: [fn(f64) -> f64; 10] = [
            sinc,
            cosc,
            sinc3,
            se3_dexp_v,
            se3_dexp_quartic,
            se3_dexp_quintic,
            dexpinv_quadratic,
            dexpinv_quartic,
            half_cot,
            log_scale,
        ];
        for f in fns {
            assert!((f(below) - f(above)).abs() < 1e-10);
        }
    }

    #[test]
    fn dexp_inv_rejects_pole() {
        let x = AlgebraVector::from_slice(GroupKind::SO3, &[2.0 * PI, 0.0, 0.0]).unwrap();
        assert!(matches!(x.dexp_inv(), Err(Error::Singularity { .. })));
    }

    #[test]
    fn membership_validation() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 0.1;
        assert!(GroupElement::new(GroupKind::SO3, m).is_err());
        let mut m = DMatrix::identity(3, 3);
        m[(2, 0)] = 0.5;
        assert!(GroupElement::new(GroupKind::SE2, m).is_err());
        let flip = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 1.0, -1.0]));
        assert!(GroupElement::new(GroupKind::SO3, flip).is_err());
        let g = GroupElement::se2(0.3, 1.0, -2.0);
        let back = GroupElement::from_row_major(GroupKind::SE2, &g.to_row_major()).unwrap();
        assert_eq!(g, back);
    }
}
