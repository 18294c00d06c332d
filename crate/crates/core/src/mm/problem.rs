use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::MmError;
use crate::grassmann::{exp_map, tangent_project, GrassmannPoint};
use crate::linalg::thin_svd;

/// A feasible pair `(G, c)` in `Gr(N, D) x C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub g: GrassmannPoint,
    pub c: DVector<f64>,
}

impl Iterate {
    pub fn new(g: GrassmannPoint, c: DVector<f64>) -> Self {
        Self { g, c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// Ambient dimension N of the Grassmann block.
    pub n: usize,
    /// Subspace dimension D.
    pub d: usize,
    /// Length of the convex block.
    pub convex_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Grassmann,
    Convex,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Block::Grassmann => "grassmann",
            Block::Convex => "convex",
        })
    }
}

/// Majorant of the cost in one block, built at an anchor iterate.
pub trait Surrogate<B>: Send + Sync {
    /// `g(candidate | anchor)`.
    fn evaluate(&self, candidate: &B, anchor: &Iterate) -> f64;

    /// Minimizer of `g(. | anchor)` over the block's feasible set.
    fn minimize(&self, anchor: &Iterate) -> Result<B, MmError>;
}

/// Cost `f(G, c)` over `G x C` together with one surrogate per block.
///
/// The cost must be invariant under `G -> G R` for orthogonal `R`, and the
/// sublevel set of the initial point is assumed compact; neither is checked
/// here (see [`super::audit_homogeneity`] for a sampled check of the former).
pub trait BlockProblem: Send + Sync {
    fn dims(&self) -> Dims;

    fn cost(&self, g: &GrassmannPoint, c: &DVector<f64>) -> f64;

    fn grassmann_surrogate(&self) -> &dyn Surrogate<GrassmannPoint>;

    fn convex_surrogate(&self) -> &dyn Surrogate<DVector<f64>>;

    /// Euclidean projection onto the closed convex set `C`.
    fn project_convex(&self, c: &DVector<f64>) -> DVector<f64> {
        c.clone()
    }

    /// Membership in the geodesically convex subset of the Grassmannian the
    /// problem is posed on. Defaults to the whole manifold.
    fn contains_grassmann(&self, _g: &GrassmannPoint) -> bool {
        true
    }

    /// Whether `f` and the convex surrogate are smooth on the segment
    /// `c + s * direction`, `|s| <= h`. Derivative audits skip directions
    /// for which this is false.
    fn convex_direction_is_smooth(&self, _c: &DVector<f64>, _direction: &DVector<f64>, _h: f64) -> bool {
        true
    }

    /// Riemannian gradient norm in G and Euclidean gradient norm in c.
    fn gradient_norms(&self, g: &GrassmannPoint, c: &DVector<f64>) -> (f64, f64) {
        fd_gradient_norms(self, g, c)
    }
}

const FD_GRAD_STEP: f64 = 1e-6;

/// Central-difference gradient norms for problems without analytic gradients.
pub fn fd_gradient_norms<P: BlockProblem + ?Sized>(
    problem: &P,
    g: &GrassmannPoint,
    c: &DVector<f64>,
) -> (f64, f64) {
    let (n, d) = g.shape();
    let projector = DMatrix::<f64>::identity(n, n) - g.basis() * g.basis().transpose();
    let complement = thin_svd(&projector).map(|s| s.u.columns(0, n - d).into_owned());
    let mut grad_g = 0.0;
    if let Ok(q) = complement {
        for i in 0..n - d {
            for j in 0..d {
                let mut e = DMatrix::<f64>::zeros(n, d);
                e.set_column(j, &q.column(i));
                let Ok(dir) = tangent_project(g, &e) else { continue };
                let plus = exp_map(g, &dir, FD_GRAD_STEP);
                let minus = exp_map(g, &dir, -FD_GRAD_STEP);
                if let (Ok(p), Ok(m)) = (plus, minus) {
                    let slope = (problem.cost(&p, c) - problem.cost(&m, c)) / (2.0 * FD_GRAD_STEP);
                    grad_g += slope * slope;
                }
            }
        }
    }
    let mut grad_c = 0.0;
    for k in 0..c.len() {
        let h = FD_GRAD_STEP * c[k].abs().max(1.0);
        let mut plus = c.clone();
        plus[k] += h;
        let mut minus = c.clone();
        minus[k] -= h;
        let slope = (problem.cost(g, &plus) - problem.cost(g, &minus)) / (2.0 * h);
        grad_c += slope * slope;
    }
    (grad_g.sqrt(), grad_c.sqrt())
}

type EvalFn<B> = dyn Fn(&B, &Iterate) -> f64 + Send + Sync;
type MinFn<B> = dyn Fn(&Iterate) -> Result<B, MmError> + Send + Sync;
type CostFn = dyn Fn(&GrassmannPoint, &DVector<f64>) -> f64 + Send + Sync;
type ProjectFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// Surrogate assembled from two closures.
pub struct FnSurrogate<B> {
    evaluate: Box<EvalFn<B>>,
    minimize: Box<MinFn<B>>,
}

impl<B> FnSurrogate<B> {
    pub fn new(
        evaluate: impl Fn(&B, &Iterate) -> f64 + Send + Sync + 'static,
        minimize: impl Fn(&Iterate) -> Result<B, MmError> + Send + Sync + 'static,
    ) -> Self {
        Self { evaluate: Box::new(evaluate), minimize: Box::new(minimize) }
    }
}

impl<B> Surrogate<B> for FnSurrogate<B> {
    fn evaluate(&self, candidate: &B, anchor: &Iterate) -> f64 {
        (self.evaluate)(candidate, anchor)
    }

    fn minimize(&self, anchor: &Iterate) -> Result<B, MmError> {
        (self.minimize)(anchor)
    }
}

/// Block problem assembled from closures; handy for experiments and tests.
pub struct FnProblem {
    dims: Dims,
    cost: Box<CostFn>,
    grassmann: Box<dyn Surrogate<GrassmannPoint>>,
    convex: Box<dyn Surrogate<DVector<f64>>>,
    projection: Option<Box<ProjectFn>>,
}

impl FnProblem {
    pub fn new(
        dims: Dims,
        cost: impl Fn(&GrassmannPoint, &DVector<f64>) -> f64 + Send + Sync + 'static,
        grassmann: impl Surrogate<GrassmannPoint> + 'static,
        convex: impl Surrogate<DVector<f64>> + 'static,
    ) -> Self {
        Self {
            dims,
            cost: Box::new(cost),
            grassmann: Box::new(grassmann),
            convex: Box::new(convex),
            projection: None,
        }
    }

    pub fn with_projection(
        mut self,
        projection: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.projection = Some(Box::new(projection));
        self
    }
}

impl BlockProblem for FnProblem {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn cost(&self, g: &GrassmannPoint, c: &DVector<f64>) -> f64 {
        (self.cost)(g, c)
    }

    fn grassmann_surrogate(&self) -> &dyn Surrogate<GrassmannPoint> {
        self.grassmann.as_ref()
    }

    fn convex_surrogate(&self) -> &dyn Surrogate<DVector<f64>> {
        self.convex.as_ref()
    }

    fn project_convex(&self, c: &DVector<f64>) -> DVector<f64> {
        match &self.projection {
            Some(p) => p(c),
            None => c.clone(),
        }
    }
}
