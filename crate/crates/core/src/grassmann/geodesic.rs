use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};

use super::{align, GeometryError, GrassmannPoint, PrincipalAngles, TangentVector};
use crate::linalg::{derive_seed, gaussian_vector, thin_svd};

/// Smallest admissible singular value of `X^T Y` for a unique geodesic.
pub const MIN_COS_FOR_UNIQUE: f64 = 1e-8;
/// Angles at or below this are treated as zero when building `Delta_a`.
pub const ANGLE_EPS: f64 = 1e-8;
const SPEC_TOL: f64 = 1e-8;
const BASE_TOL: f64 = 1e-12;
const COMPLETION_SEED: u64 = 0x6772_6173_736d_616e;

/// Aligned geodesic `Gamma_a(t) = X_a cos(theta t) + Delta_a sin(theta t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSpec {
    x_a: GrassmannPoint,
    delta_a: TangentVector,
    theta: PrincipalAngles,
}

impl GeodesicSpec {
    /// Checks `Delta_a^T Delta_a = I` and `X_a^T Delta_a = 0`.
    ///
    /// A zero column is accepted where the matching angle is zero and the
    /// complement of `span(X_a)` has no room left (only when N < 2D); it is
    /// multiplied by `sin(0)` and never contributes.
    pub fn new(
        x_a: GrassmannPoint,
        delta_a: TangentVector,
        theta: PrincipalAngles,
    ) -> Result<Self, GeometryError> {
        let d = x_a.dim();
        if theta.len() != d {
            return Err(GeometryError::InvalidSpec(format!(
                "{} angles for a {d}-dimensional subspace",
                theta.len()
            )));
        }
        if theta.as_slice().iter().any(|t| !(0.0..=FRAC_PI_2 + 1e-12).contains(t)) {
            return Err(GeometryError::InvalidSpec("angle outside [0, pi/2]".into()));
        }
        if (delta_a.base().basis() - x_a.basis()).amax() > BASE_TOL {
            return Err(GeometryError::BaseMismatch);
        }
        let delta = delta_a.delta();
        let gram = delta.transpose() * delta;
        let room = x_a.ambient_dim() - d;
        let filled = (0..d).filter(|&k| gram[(k, k)] > 0.5).count();
        for i in 0..d {
            for j in 0..d {
                let zero_col = gram[(i, i)] <= 0.5 && theta.as_slice()[i] <= ANGLE_EPS && filled == room;
                let expected = if i == j && !zero_col { 1.0 } else { 0.0 };
                if (gram[(i, j)] - expected).abs() > SPEC_TOL {
                    return Err(GeometryError::InvalidSpec(format!(
                        "Delta_a^T Delta_a deviates from identity at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { x_a, delta_a, theta })
    }

    pub fn x_a(&self) -> &GrassmannPoint {
        &self.x_a
    }

    pub fn delta_a(&self) -> &TangentVector {
        &self.delta_a
    }

    pub fn theta(&self) -> &PrincipalAngles {
        &self.theta
    }
}

/// Tangent vector `H` at X with `exp_map(X, H, 1) = Y`.
///
/// Uses `L = (I - X X^T) Y (X^T Y)^{-1}`, `L = U S V^T`, `H = U atan(S) V^T`.
pub fn log_map(x: &GrassmannPoint, y: &GrassmannPoint) -> Result<TangentVector, GeometryError> {
    x.check_same_shape(y)?;
    let xb = x.basis();
    let m = xb.transpose() * y.basis();
    let svd = thin_svd(&m)?;
    let min_cos = svd.s[svd.s.len() - 1];
    if min_cos <= MIN_COS_FOR_UNIQUE {
        return Err(GeometryError::GeodesicNotUnique { min_cos });
    }
    let mut v_scaled = svd.v.clone();
    for (k, s) in svd.s.iter().enumerate() {
        v_scaled.column_mut(k).scale_mut(1.0 / s);
    }
    let m_inv = v_scaled * svd.u.transpose();
    let l = (y.basis() - xb * &m) * m_inv;
    let lsvd = thin_svd(&l)?;
    let mut u_atan = lsvd.u.clone();
    for (k, s) in lsvd.s.iter().enumerate() {
        u_atan.column_mut(k).scale_mut(s.atan());
    }
    let h = u_atan * lsvd.v.transpose();
    let h = &h - xb * (xb.transpose() * &h);
    TangentVector::new(x.clone(), h)
}

/// `Gamma(t) = X V cos(theta t) V^T + U sin(theta t) V^T` with `H = U theta V^T`.
pub fn exp_map(x: &GrassmannPoint, h: &TangentVector, t: f64) -> Result<GrassmannPoint, GeometryError> {
    if h.base().shape() != x.shape() || (h.base().basis() - x.basis()).amax() > BASE_TOL {
        return Err(GeometryError::BaseMismatch);
    }
    if !t.is_finite() {
        return Err(GeometryError::NonFinite("t"));
    }
    let svd = thin_svd(h.delta())?;
    let norm = svd.s[0];
    if norm > FRAC_PI_2 + 1e-9 {
        return Err(GeometryError::StepTooLong { norm });
    }
    let d = x.dim();
    let mut xv_cos = x.basis() * &svd.v;
    let mut u_sin = svd.u.clone();
    for k in 0..d {
        let angle = svd.s[k] * t;
        xv_cos.column_mut(k).scale_mut(angle.cos());
        u_sin.column_mut(k).scale_mut(angle.sin());
    }
    GrassmannPoint::from_orthonormal((xv_cos + u_sin) * svd.v.transpose())
}

/// Builds `(X_a, Delta_a, theta)` so that `Gamma_a(1) = Y_a`.
pub fn build_aligned_spec(x: &GrassmannPoint, y: &GrassmannPoint) -> Result<GeodesicSpec, GeometryError> {
    let pair = align(x, y)?;
    let (n, d) = x.shape();
    let xa = pair.x_a.basis();
    let ya = pair.y_a.basis();
    let theta = pair.theta.as_slice();
    // Column d of the residual equals y_d - x_d cos(theta_d); its norm is sin(theta_d).
    let residual = ya - xa * (xa.transpose() * ya);

    let mut delta = DMatrix::<f64>::zeros(n, d);
    let mut accepted: Vec<usize> = Vec::with_capacity(d);
    let mut by_angle: Vec<usize> = (0..d).filter(|&k| theta[k] > ANGLE_EPS).collect();
    by_angle.sort_by(|&i, &j| theta[j].total_cmp(&theta[i]));
    for k in by_angle {
        let v = orthogonalize(residual.column(k).into_owned(), xa, &delta, &accepted);
        delta.set_column(k, &(&v / v.norm()));
        accepted.push(k);
    }
    for k in (0..d).filter(|&k| theta[k] <= ANGLE_EPS) {
        let g = gaussian_vector(derive_seed(COMPLETION_SEED, k as u64), n);
        let scale = g.norm();
        let v = orthogonalize(g, xa, &delta, &accepted);
        let norm = v.norm();
        if norm > 1e-8 * scale {
            delta.set_column(k, &(&v / norm));
            accepted.push(k);
        }
    }
    let delta_a = TangentVector::new(pair.x_a.clone(), delta)?;
    GeodesicSpec::new(pair.x_a, delta_a, pair.theta)
}

fn orthogonalize(
    mut v: DVector<f64>,
    x: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    cols: &[usize],
) -> DVector<f64> {
    for _ in 0..2 {
        let proj = x.transpose() * &v;
        v -= x * proj;
        for &j in cols {
            let c = delta.column(j).dot(&v);
            v.axpy(-c, &delta.column(j), 1.0);
        }
    }
    v
}

/// Evaluates the aligned geodesic at `t`.
pub fn aligned_geodesic_at(spec: &GeodesicSpec, t: f64) -> Result<GrassmannPoint, GeometryError> {
    if !t.is_finite() {
        return Err(GeometryError::NonFinite("t"));
    }
    let mut xc = spec.x_a.basis().clone();
    let mut ds = spec.delta_a.delta().clone();
    for (k, theta) in spec.theta.as_slice().iter().enumerate() {
        xc.column_mut(k).scale_mut((theta * t).cos());
        ds.column_mut(k).scale_mut((theta * t).sin());
    }
    GrassmannPoint::from_orthonormal(xc + ds)
}
