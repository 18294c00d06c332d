//! Geometry of the Grassmann manifold Gr(N, D) in the orthonormal-basis
//! representation: a point is any N x D matrix `X` with `X^T X = I`, and
//! `X` and `X R` (R orthogonal) are the same point.
//!
//! Subspace equality is always decided through [`canonical_distance`],
//! never by comparing representatives entrywise.

mod angles;
mod geodesic;

pub use angles::{align, canonical_distance, principal_angles, AlignedPair, PrincipalAngles};
pub use geodesic::{
    aligned_geodesic_at, build_aligned_spec, exp_map, log_map, GeodesicSpec, ANGLE_EPS,
    MIN_COS_FOR_UNIQUE,
};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, orthonormality_error, LinalgError};

/// Tolerance on `X^T X = I` for a representative.
pub const POINT_TOL: f64 = 1e-9;
/// Tolerance on `X^T Delta = 0` for a tangent vector.
pub const TANGENT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("need 1 <= D < N, got N={n}, D={d}")]
    InvalidDimensions { n: usize, d: usize },
    #[error("dimension mismatch: expected {expected:?}, got {found:?}")]
    DimensionMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("basis is not orthonormal (max |X^T X - I| = {error:e})")]
    NotOrthonormal { error: f64 },
    #[error("direction is not tangent at the base point (max |X^T D| = {error:e})")]
    NotTangent { error: f64 },
    #[error("tangent vector is based at a different representative")]
    BaseMismatch,
    #[error("geodesic is not unique: smallest cos(principal angle) = {min_cos:e}")]
    GeodesicNotUnique { min_cos: f64 },
    #[error("tangent vector too long for the geodesic formula: largest singular value {norm}")]
    StepTooLong { norm: f64 },
    #[error("invalid geodesic spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite parameter {0}")]
    NonFinite(&'static str),
}

/// A point of Gr(N, D) held through one orthonormal representative.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannPoint {
    basis: DMatrix<f64>,
}

impl GrassmannPoint {
    /// Wraps an already-orthonormal basis, checking the invariant.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self, GeometryError> {
        let (n, d) = basis.shape();
        if d == 0 || d >= n {
            return Err(GeometryError::InvalidDimensions { n, d });
        }
        linalg::ensure_valid(&basis)?;
        let error = orthonormality_error(&basis);
        if error > POINT_TOL {
            return Err(GeometryError::NotOrthonormal { error });
        }
        Ok(Self { basis })
    }

    /// Unit vector in Gr(N, 1); the input is normalized.
    pub fn from_vector(v: &DVector<f64>) -> Result<Self, GeometryError> {
        make_point(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<f64> {
        self.basis
    }

    /// Ambient dimension N.
    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Subspace dimension D.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.basis.shape()
    }

    /// First column as a vector; the natural view for Gr(N, 1).
    pub fn column_vector(&self) -> DVector<f64> {
        self.basis.column(0).into_owned()
    }

    /// Another representative `X R` of the same subspace.
    pub fn rotated(&self, r: &DMatrix<f64>) -> Result<Self, GeometryError> {
        let d = self.dim();
        if r.shape() != (d, d) {
            return Err(GeometryError::DimensionMismatch { expected: (d, d), found: r.shape() });
        }
        Self::from_orthonormal(&self.basis * r)
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<(), GeometryError> {
        if self.shape() != other.shape() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }
}

/// Direction `Delta` at a base point with `X^T Delta = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: GrassmannPoint,
    delta: DMatrix<f64>,
}

impl TangentVector {
    pub fn new(base: GrassmannPoint, delta: DMatrix<f64>) -> Result<Self, GeometryError> {
        if delta.shape() != base.shape() {
            return Err(GeometryError::DimensionMismatch {
                expected: base.shape(),
                found: delta.shape(),
            });
        }
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite.into());
        }
        let error = (base.basis().transpose() * &delta).amax();
        if error > TANGENT_TOL * delta.norm().max(1.0) {
            return Err(GeometryError::NotTangent { error });
        }
        Ok(Self { base, delta })
    }

    pub fn zero(base: GrassmannPoint) -> Self {
        let (n, d) = base.shape();
        Self { base, delta: DMatrix::zeros(n, d) }
    }

    pub fn base(&self) -> &GrassmannPoint {
        &self.base
    }

    pub fn delta(&self) -> &DMatrix<f64> {
        &self.delta
    }

    /// Frobenius norm, the canonical-metric length.
    pub fn norm(&self) -> f64 {
        self.delta.norm()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { base: self.base.clone(), delta: &self.delta * s }
    }
}

/// Orthonormalizes a full-column-rank matrix into a point.
pub fn make_point(m: &DMatrix<f64>) -> Result<GrassmannPoint, GeometryError> {
    let (n, d) = m.shape();
    if d == 0 || d >= n {
        return Err(GeometryError::InvalidDimensions { n, d });
    }
    let qr = linalg::qr_orthonormalize(m)?;
    GrassmannPoint::from_orthonormal(qr.q)
}

/// `(I - X X^T) A`, the orthogonal projection onto the tangent space at X.
pub fn tangent_project(x: &GrassmannPoint, a: &DMatrix<f64>) -> Result<TangentVector, GeometryError> {
    if a.shape() != x.shape() {
        return Err(GeometryError::DimensionMismatch { expected: x.shape(), found: a.shape() });
    }
    let xb = x.basis();
    let delta = a - xb * (xb.transpose() * a);
    TangentVector::new(x.clone(), delta)
}

/// Riemannian gradient of a homogeneous cost from its ambient gradient.
pub fn riemannian_gradient(
    x: &GrassmannPoint,
    euclidean_grad: &DMatrix<f64>,
) -> Result<TangentVector, GeometryError> {
    tangent_project(x, euclidean_grad)
}

/// Uniformly distributed point of Gr(n, d), deterministic per seed.
pub fn random_point(seed: u64, n: usize, d: usize) -> Result<GrassmannPoint, GeometryError> {
    if d == 0 || d >= n {
        return Err(GeometryError::InvalidDimensions { n, d });
    }
    GrassmannPoint::from_orthonormal(linalg::random_orthonormal(seed, n, d)?)
}

/// Random unit-norm tangent direction at `x`.
pub fn random_tangent(seed: u64, x: &GrassmannPoint) -> TangentVector {
    let (n, d) = x.shape();
    let mut stream = 0;
    loop {
        let g = linalg::gaussian_matrix(linalg::derive_seed(seed, stream), n, d);
        let t = tangent_project(x, &g).expect("shapes agree by construction");
        let norm = t.norm();
        if norm > 1e-12 {
            return t.scaled(1.0 / norm);
        }
        stream += 1;
    }
}
