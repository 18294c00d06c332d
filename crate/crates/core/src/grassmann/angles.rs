use std::cmp::Ordering;

use nalgebra::DMatrix;

use super::{GeometryError, GrassmannPoint};
use crate::linalg::thin_svd;

/// The D principal angles between two subspaces, ascending, each in [0, pi/2].
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAngles(Vec<f64>);

impl PrincipalAngles {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.0.last().copied().unwrap_or(0.0)
    }

    /// Frobenius norm of diag(theta).
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|t| t * t).sum::<f64>().sqrt()
    }
}

/// Representatives `X_a = X U`, `Y_a = Y V` with `X_a^T Y_a = cos(theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub x_a: GrassmannPoint,
    pub y_a: GrassmannPoint,
    pub theta: PrincipalAngles,
}

/// Aligns two representatives through the SVD of `X^T Y`.
///
/// Angles are evaluated as `atan2(|y_d - X X^T y_d|, sigma_d)` per aligned
/// column rather than `acos(sigma_d)`; the two agree exactly in exact
/// arithmetic but `acos` loses half the digits for angles near zero.
pub fn align(x: &GrassmannPoint, y: &GrassmannPoint) -> Result<AlignedPair, GeometryError> {
    x.check_same_shape(y)?;
    let xb = x.basis();
    let yb = y.basis();
    let svd = thin_svd(&(xb.transpose() * yb))?;
    let x_a = xb * &svd.u;
    let y_a = yb * &svd.v;
    let residual = &y_a - &x_a * (x_a.transpose() * &y_a);

    let d = x.dim();
    let theta: Vec<f64> = (0..d)
        .map(|k| residual.column(k).norm().atan2(svd.s[k]))
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| theta[i].total_cmp(&theta[j]));

    let permute = |m: &DMatrix<f64>| {
        DMatrix::from_columns(&order.iter().map(|&k| m.column(k)).collect::<Vec<_>>())
    };
    Ok(AlignedPair {
        x_a: GrassmannPoint::from_orthonormal(permute(&x_a))?,
        y_a: GrassmannPoint::from_orthonormal(permute(&y_a))?,
        theta: PrincipalAngles(order.iter().map(|&k| theta[k]).collect()),
    })
}

fn basis_order(x: &GrassmannPoint, y: &GrassmannPoint) -> Ordering {
    x.basis()
        .iter()
        .zip(y.basis().iter())
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Principal angles between `[X]` and `[Y]`.
///
/// The pair is put in a fixed order before factorizing so the result is
/// bitwise symmetric in its arguments.
pub fn principal_angles(
    x: &GrassmannPoint,
    y: &GrassmannPoint,
) -> Result<PrincipalAngles, GeometryError> {
    x.check_same_shape(y)?;
    let (first, second) = match basis_order(x, y) {
        Ordering::Greater => (y, x),
        _ => (x, y),
    };
    Ok(align(first, second)?.theta)
}

/// Arclength distance `||theta||_F`.
pub fn canonical_distance(x: &GrassmannPoint, y: &GrassmannPoint) -> Result<f64, GeometryError> {
    Ok(principal_angles(x, y)?.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::{make_point, random_point};
    use crate::linalg::random_orthonormal;
    use nalgebra::dmatrix;
    use std::f64::consts::FRAC_PI_2;

    fn line(angle: f64) -> GrassmannPoint {
        make_point(&dmatrix![angle.cos(); angle.sin()]).unwrap()
    }

    #[test]
    fn rotated_representative_has_zero_angles() {
        let x = random_point(1, 7, 3).unwrap();
        let y = x.rotated(&random_orthonormal(2, 3, 3).unwrap()).unwrap();
        for t in principal_angles(&x, &y).unwrap().as_slice() {
            assert!(t.abs() < 1e-14);
        }
    }

    #[test]
    fn orthogonal_lines() {
        let a = principal_angles(&line(0.0), &line(FRAC_PI_2)).unwrap();
        assert!((a.as_slice()[0] - FRAC_PI_2).abs() < 1e-15);
        assert!((canonical_distance(&line(0.0), &line(FRAC_PI_2)).unwrap() - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn planar_angle() {
        let a = principal_angles(&line(0.0), &line(0.3)).unwrap();
        assert!((a.as_slice()[0] - 0.3).abs() <= 1e-10);
    }

    #[test]
    fn distance_to_self_is_zero() {
        let x = random_point(4, 5, 2).unwrap();
        assert!(canonical_distance(&x, &x).unwrap() < 1e-15);
    }

    #[test]
    fn aligned_identical_pair() {
        let x = random_point(8, 6, 2).unwrap();
        let p = align(&x, &x).unwrap();
        let g = p.x_a.basis().transpose() * p.y_a.basis();
        assert!((g - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn aligned_random_pair_is_diagonal() {
        let x = random_point(10, 5, 2).unwrap();
        let y = random_point(11, 5, 2).unwrap();
        let p = align(&x, &y).unwrap();
        let g = p.x_a.basis().transpose() * p.y_a.basis();
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { p.theta.as_slice()[i].cos() } else { 0.0 };
                assert!((g[(i, j)] - expected).abs() <= 1e-8);
            }
            assert!((0.0..=1.0).contains(&g[(i, i)]));
        }
    }

    #[test]
    fn aligned_orthogonal_pair() {
        let e = DMatrix::<f64>::identity(4, 4);
        let x = make_point(&e.columns(0, 2).into_owned()).unwrap();
        let y = make_point(&e.columns(2, 2).into_owned()).unwrap();
        let p = align(&x, &y).unwrap();
        assert!((p.x_a.basis().transpose() * p.y_a.basis()).amax() < 1e-15);
        assert!(p.theta.as_slice().iter().all(|t| (t - FRAC_PI_2).abs() < 1e-15));
    }

    #[test]
    fn disjoint_plane_rotations() {
        // Rotations of 0.2 in the (e1, e3) plane and 0.5 in the (e2, e4) plane.
        let x = make_point(&dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0; 0.0, 0.0]).unwrap();
        let (a, b) = (0.2f64, 0.5f64);
        let y = make_point(&dmatrix![a.cos(), 0.0; 0.0, b.cos(); a.sin(), 0.0; 0.0, b.sin()]).unwrap();
        let angles = principal_angles(&x, &y).unwrap();
        assert!((angles.as_slice()[0] - 0.2).abs() <= 1e-9);
        assert!((angles.as_slice()[1] - 0.5).abs() <= 1e-9);
        let d = canonical_distance(&x, &y).unwrap();
        assert!((d - (0.2f64.powi(2) + 0.5f64.powi(2)).sqrt()).abs() <= 1e-9);
    }

    #[test]
    fn mismatched_shapes_error() {
        let x = random_point(1, 5, 2).unwrap();
        let y = random_point(1, 6, 2).unwrap();
        assert!(matches!(principal_angles(&x, &y), Err(GeometryError::DimensionMismatch { .. })));
        assert!(align(&x, &y).is_err());
        assert!(canonical_distance(&x, &y).is_err());
    }
}
