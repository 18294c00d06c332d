//! Subspace-plus-mean fitting: `f(G, c) = ||(I - G G^T)(A - c 1^T)||_F^2`.
//!
//! Both block surrogates are the cost itself, minimized in closed form.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::problem::{BlockProblem, Dims, Iterate, Surrogate};
use super::MmError;
use crate::grassmann::{random_point, GeometryError, GrassmannPoint};
use crate::linalg::{derive_seed, gaussian_matrix, gaussian_vector, random_orthonormal, thin_svd};

#[derive(Debug)]
struct Data {
    a: DMatrix<f64>,
    row_mean: DVector<f64>,
    d: usize,
}

impl Data {
    fn centered(&self, c: &DVector<f64>) -> DMatrix<f64> {
        let mut b = self.a.clone();
        for mut col in b.column_iter_mut() {
            col -= c;
        }
        b
    }

    fn residual(&self, g: &GrassmannPoint, c: &DVector<f64>) -> DMatrix<f64> {
        let b = self.centered(c);
        let coeff = g.basis().transpose() * &b;
        b - g.basis() * coeff
    }

    fn cost(&self, g: &GrassmannPoint, c: &DVector<f64>) -> f64 {
        self.residual(g, c).norm_squared()
    }
}

struct SubspaceStep(Arc<Data>);
struct MeanStep(Arc<Data>);

impl Surrogate<GrassmannPoint> for SubspaceStep {
    fn evaluate(&self, candidate: &GrassmannPoint, anchor: &Iterate) -> f64 {
        self.0.cost(candidate, &anchor.c)
    }

    fn minimize(&self, anchor: &Iterate) -> Result<GrassmannPoint, MmError> {
        let svd = thin_svd(&self.0.centered(&anchor.c)).map_err(GeometryError::from)?;
        Ok(GrassmannPoint::from_orthonormal(svd.u.columns(0, self.0.d).into_owned())?)
    }
}

impl Surrogate<DVector<f64>> for MeanStep {
    fn evaluate(&self, candidate: &DVector<f64>, anchor: &Iterate) -> f64 {
        self.0.cost(&anchor.g, candidate)
    }

    /// Any `c` with `(I - G G^T)(c - mean) = 0` is optimal; the row mean of
    /// `A` is the one independent of `G`.
    fn minimize(&self, _anchor: &Iterate) -> Result<DVector<f64>, MmError> {
        Ok(self.0.row_mean.clone())
    }
}

pub struct SubspaceMeanProblem {
    data: Arc<Data>,
    subspace: SubspaceStep,
    mean: MeanStep,
}

impl std::fmt::Debug for SubspaceMeanProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubspaceMeanProblem")
            .field("n", &self.data.a.nrows())
            .field("m", &self.data.a.ncols())
            .field("d", &self.data.d)
            .finish()
    }
}

/// Subspace-plus-mean problem for the columns of the `N x M` matrix `a`.
pub fn builtin_subspace_plus_mean(a: DMatrix<f64>, d: usize) -> Result<SubspaceMeanProblem, MmError> {
    let (n, m) = a.shape();
    if d == 0 || d >= n.min(m) {
        return Err(MmError::Dimension(format!("need 0 < D < min(N, M), got D = {d} for a {n}x{m} matrix")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(MmError::Dimension("data matrix has non-finite entries".into()));
    }
    let row_mean = a.column_mean();
    let data = Arc::new(Data { a, row_mean, d });
    Ok(SubspaceMeanProblem {
        subspace: SubspaceStep(Arc::clone(&data)),
        mean: MeanStep(Arc::clone(&data)),
        data,
    })
}

impl SubspaceMeanProblem {
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data.a
    }

    /// Global minimum: the energy of the centered data outside its top `D`
    /// singular directions.
    pub fn optimal_cost(&self) -> f64 {
        let svd = thin_svd(&self.data.centered(&self.data.row_mean)).expect("finite data");
        svd.s.iter().skip(self.data.d).map(|s| s * s).sum()
    }

    /// Random subspace with a zero mean.
    pub fn random_init(&self, seed: u64) -> Iterate {
        let (n, _) = self.data.a.shape();
        Iterate::new(
            random_point(seed, n, self.data.d).expect("dimensions validated at construction"),
            DVector::zeros(n),
        )
    }
}

impl BlockProblem for SubspaceMeanProblem {
    fn dims(&self) -> Dims {
        Dims { n: self.data.a.nrows(), d: self.data.d, convex_len: self.data.a.nrows() }
    }

    fn cost(&self, g: &GrassmannPoint, c: &DVector<f64>) -> f64 {
        self.data.cost(g, c)
    }

    fn grassmann_surrogate(&self) -> &dyn Surrogate<GrassmannPoint> {
        &self.subspace
    }

    fn convex_surrogate(&self) -> &dyn Surrogate<DVector<f64>> {
        &self.mean
    }

    /// `-2 P B B^T G` and `-2 P B 1` with `B = A - c 1^T`, `P = I - G G^T`.
    fn gradient_norms(&self, g: &GrassmannPoint, c: &DVector<f64>) -> (f64, f64) {
        let b = self.data.centered(c);
        let x = g.basis();
        let project = |m: DMatrix<f64>| {
            let coeff = x.transpose() * &m;
            m - x * coeff
        };
        let grad_g = project(&b * (b.transpose() * x)) * -2.0;
        let ones = DMatrix::from_element(b.ncols(), 1, 1.0);
        let grad_c = project(&b * ones) * -2.0;
        (grad_g.norm(), grad_c.norm())
    }
}

/// `A = U W + mu 1^T + noise E` with `U` a random `n x d` orthonormal basis,
/// `W` and `E` standard Gaussian and `mu` a Gaussian mean of scale 3.
pub fn subspace_mean_data(seed: u64, n: usize, m: usize, d: usize, noise: f64) -> DMatrix<f64> {
    let u = random_orthonormal(derive_seed(seed, 0), n, d).expect("d <= n");
    let w = gaussian_matrix(derive_seed(seed, 1), d, m) * 3.0;
    let mu = gaussian_vector(derive_seed(seed, 2), n) * 3.0;
    let e = gaussian_matrix(derive_seed(seed, 3), n, m);
    let mut a = u * w + e * noise;
    for mut col in a.column_iter_mut() {
        col += &mu;
    }
    a
}
