//! Blind sparse deconvolution: `||y - a * x||^2 + lambda ||x||_1` with the
//! kernel `a` a point of Gr(N, 1) and `*` circular convolution.
//!
//! A point of Gr(N, 1) fixes `a` only up to sign, while the data term is
//! invariant only under the joint flip `(a, x) -> (-a, -x)`. The cost is
//! therefore taken over the better of the two representatives, and the
//! gradients and steps below act on that *oriented* representative.

mod instance;
mod problem;

pub use instance::{
    default_init, default_lambda, generate_instance, generate_spike_instance, random_init,
    recovery_score, SyntheticInstance,
};
pub use problem::{solve_deconv, DeconvBlockProblem};

use nalgebra::DVector;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::grassmann::{GeometryError, GrassmannPoint};

/// Riemannian gradients at or below this norm leave the kernel unchanged.
pub const ZERO_GRADIENT_GUARD: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeconvError {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn check_len(expected: usize, found: usize) -> Result<(), DeconvError> {
    if expected == found {
        Ok(())
    } else {
        Err(DeconvError::LengthMismatch { expected, found })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvProblem {
    y: DVector<f64>,
    lambda: f64,
}

impl DeconvProblem {
    pub fn new(y: DVector<f64>, lambda: f64) -> Result<Self, DeconvError> {
        if y.is_empty() {
            return Err(DeconvError::InvalidParameter("observation is empty".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(DeconvError::NonFinite("observation"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(DeconvError::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { y, lambda })
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Kernel on Gr(N, 1) and sparse signal.
#[derive(Debug, Clone, PartialEq)]
pub struct DeconvState {
    pub a: GrassmannPoint,
    pub x: DVector<f64>,
}

impl DeconvState {
    /// `a` must have unit norm within 1e-10.
    pub fn new(a: &DVector<f64>, x: DVector<f64>) -> Result<Self, DeconvError> {
        check_len(a.len(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DeconvError::NonFinite("signal"));
        }
        if (a.norm() - 1.0).abs() > 1e-10 {
            return Err(DeconvError::InvalidParameter(format!("kernel norm {} is not 1", a.norm())));
        }
        Ok(Self { a: GrassmannPoint::from_vector(a)?, x })
    }

    pub fn from_point(a: GrassmannPoint, x: DVector<f64>) -> Result<Self, DeconvError> {
        if a.dim() != 1 {
            return Err(DeconvError::InvalidParameter(format!("kernel must be a line, got dimension {}", a.dim())));
        }
        check_len(a.ambient_dim(), x.len())?;
        Ok(Self { a, x })
    }

    pub fn kernel(&self) -> DVector<f64> {
        self.a.column_vector()
    }
}

/// `out[n] = sum_k a[k] x[(n - k) mod N]`.
pub fn circular_convolution(a: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>, DeconvError> {
    check_len(a.len(), x.len())?;
    let n = a.len();
    Ok(DVector::from_fn(n, |i, _| {
        let mut acc = 0.0;
        for k in 0..n {
            acc += a[k] * x[(i + n - k) % n];
        }
        acc
    }))
}

/// `out[k] = sum_n u[(n - k) mod N] r[n]`, the adjoint of `x -> u * x`.
pub fn circular_correlation(u: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>, DeconvError> {
    check_len(u.len(), r.len())?;
    let n = u.len();
    Ok(DVector::from_fn(n, |k, _| {
        let mut acc = 0.0;
        for i in 0..n {
            acc += u[(i + n - k) % n] * r[i];
        }
        acc
    }))
}

/// `y - a * x`.
pub fn residual(p: &DeconvProblem, a: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>, DeconvError> {
    check_len(p.len(), a.len())?;
    Ok(p.y() - circular_convolution(a, x)?)
}

/// Smooth term `||y - a * x||^2` for a fixed kernel vector.
pub fn data_term(p: &DeconvProblem, a: &DVector<f64>, x: &DVector<f64>) -> Result<f64, DeconvError> {
    Ok(residual(p, a, x)?.norm_squared())
}

/// Kernel representative with the smaller data term (ties keep `a`), and
/// that data term.
pub fn oriented_kernel(p: &DeconvProblem, s: &DeconvState) -> Result<(DVector<f64>, f64), DeconvError> {
    let a = s.kernel();
    let plus = data_term(p, &a, &s.x)?;
    let minus = data_term(p, &-&a, &s.x)?;
    if minus < plus {
        Ok((-a, minus))
    } else {
        Ok((a, plus))
    }
}

/// `min over signs ||y -+ a * x||^2 + lambda ||x||_1`.
pub fn deconv_cost(p: &DeconvProblem, s: &DeconvState) -> Result<f64, DeconvError> {
    let (_, data) = oriented_kernel(p, s)?;
    Ok(data + p.lambda() * s.x.lp_norm(1))
}

/// Gradient of `||y - a * x||^2` in `x`: `-2 corr(a, y - a * x)`.
pub fn grad_x(p: &DeconvProblem, a: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>, DeconvError> {
    Ok(circular_correlation(a, &residual(p, a, x)?)? * -2.0)
}

/// Gradient of `||y - a * x||^2` in `a`: `-2 corr(x, y - a * x)`.
pub fn grad_a(p: &DeconvProblem, a: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>, DeconvError> {
    Ok(circular_correlation(x, &residual(p, a, x)?)? * -2.0)
}

/// `sign(v) max(|v| - tau, 0)`.
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    v.signum() * (v.abs() - tau).max(0.0)
}

/// `soft_threshold(x - step grad_x, step lambda)` at the oriented kernel.
pub fn prox_step_x(p: &DeconvProblem, s: &DeconvState, step: f64) -> Result<DVector<f64>, DeconvError> {
    check_step(step)?;
    let (a, _) = oriented_kernel(p, s)?;
    let g = grad_x(p, &a, &s.x)?;
    let tau = step * p.lambda();
    Ok((&s.x - g * step).map(|v| soft_threshold(v, tau)))
}

fn check_step(step: f64) -> Result<(), DeconvError> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(DeconvError::InvalidParameter(format!("step must be positive and finite, got {step}")))
    }
}

/// `2 max_k |DFT(v)[k]|^2`: twice the largest eigenvalue of `C_v^T C_v`
/// for the circulant `C_v`, i.e. the curvature of the data term in the
/// other block.
pub fn lipschitz_bound(v: &DVector<f64>) -> f64 {
    let mut buf: Vec<Complex<f64>> = v.iter().map(|&r| Complex::new(r, 0.0)).collect();
    if buf.is_empty() {
        return 0.0;
    }
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    2.0 * buf.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max)
}

/// One Riemannian gradient step on Gr(N, 1): with `g` the tangent part of
/// the data-term gradient at the oriented kernel and `h = -step g`, returns
/// `a cos|h| + (h / |h|) sin|h|`.
pub fn riemannian_step_a(p: &DeconvProblem, s: &DeconvState, step: f64) -> Result<GrassmannPoint, DeconvError> {
    check_step(step)?;
    let (a, _) = oriented_kernel(p, s)?;
    let euclid = grad_a(p, &a, &s.x)?;
    let rg = &euclid - &a * a.dot(&euclid);
    let norm = rg.norm();
    if norm <= ZERO_GRADIENT_GUARD {
        return Ok(s.a.clone());
    }
    let angle = step * norm;
    let next = &a * angle.cos() - rg * (angle.sin() / norm);
    let len = next.norm();
    Ok(GrassmannPoint::from_vector(&(next / len))?)
}

/// Exact minimizer over Gr(N, 1) of the kernel surrogate
/// `min over signs q(+-v)` with
/// `q(v) = d(a) + grad^T (v - a) + (L / 2) |v - a|^2`, `L = lipschitz_bound(x) / scale`.
///
/// On unit vectors `q` is linear in `v`, so the minimizer is the direction of
/// `L a - grad`: a geodesic step along `-rg` of angle
/// `atan2(|rg|, L - a^T grad)`.
pub fn majorant_step_a(p: &DeconvProblem, s: &DeconvState, scale: f64) -> Result<GrassmannPoint, DeconvError> {
    check_step(scale)?;
    let (a, _) = oriented_kernel(p, s)?;
    let lip = lipschitz_bound(&s.x) / scale;
    let euclid = grad_a(p, &a, &s.x)?;
    let radial = a.dot(&euclid);
    let rg = &euclid - &a * radial;
    let norm = rg.norm();
    if norm <= ZERO_GRADIENT_GUARD {
        return Ok(s.a.clone());
    }
    let angle = norm.atan2((lip - radial).max(0.0));
    let next = &a * angle.cos() - rg * (angle.sin() / norm);
    let len = next.norm();
    Ok(GrassmannPoint::from_vector(&(next / len))?)
}
