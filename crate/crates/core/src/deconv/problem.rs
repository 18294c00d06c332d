use std::sync::Arc;

use nalgebra::DVector;

use super::{
    deconv_cost, grad_a, grad_x, lipschitz_bound, majorant_step_a, oriented_kernel, prox_step_x,
    DeconvError, DeconvProblem, DeconvState,
};
use crate::grassmann::GrassmannPoint;
use crate::mm::{
    run_block_mm, BlockProblem, ConvergenceReport, Dims, Iterate, IterationTrace, MmError,
    SolverConfig, Surrogate,
};

#[derive(Debug)]
struct Inner {
    problem: DeconvProblem,
    step_scale: f64,
}

impl Inner {
    fn state(&self, anchor: &Iterate) -> DeconvState {
        DeconvState { a: anchor.g.clone(), x: anchor.c.clone() }
    }
}

/// Quadratic majorant of the data term in the kernel, folded over the sign.
struct KernelSurrogate(Arc<Inner>);

/// Quadratic majorant of the data term in the signal plus the exact l1 term.
struct SignalSurrogate(Arc<Inner>);

impl Surrogate<GrassmannPoint> for KernelSurrogate {
    fn evaluate(&self, candidate: &GrassmannPoint, anchor: &Iterate) -> f64 {
        let p = &self.0.problem;
        let (a, data) = oriented_kernel(p, &self.0.state(anchor)).expect("validated dimensions");
        let lip = lipschitz_bound(&anchor.c) / self.0.step_scale;
        let grad = grad_a(p, &a, &anchor.c).expect("validated dimensions");
        let l1 = p.lambda() * anchor.c.lp_norm(1);
        let v = candidate.column_vector();
        let q = |w: &DVector<f64>| {
            let step = w - &a;
            data + grad.dot(&step) + 0.5 * lip * step.norm_squared() + l1
        };
        q(&v).min(q(&-v))
    }

    fn minimize(&self, anchor: &Iterate) -> Result<GrassmannPoint, MmError> {
        Ok(majorant_step_a(&self.0.problem, &self.0.state(anchor), self.0.step_scale)?)
    }
}

impl Surrogate<DVector<f64>> for SignalSurrogate {
    fn evaluate(&self, candidate: &DVector<f64>, anchor: &Iterate) -> f64 {
        let p = &self.0.problem;
        let (a, data) = oriented_kernel(p, &self.0.state(anchor)).expect("validated dimensions");
        let lip = lipschitz_bound(&a) / self.0.step_scale;
        let grad = grad_x(p, &a, &anchor.c).expect("validated dimensions");
        let step = candidate - &anchor.c;
        data + grad.dot(&step) + 0.5 * lip * step.norm_squared() + p.lambda() * candidate.lp_norm(1)
    }

    fn minimize(&self, anchor: &Iterate) -> Result<DVector<f64>, MmError> {
        let state = self.0.state(anchor);
        let (a, _) = oriented_kernel(&self.0.problem, &state)?;
        let step = self.0.step_scale / lipschitz_bound(&a);
        Ok(prox_step_x(&self.0.problem, &state, step)?)
    }
}

/// Deconvolution as a two-block problem: kernel on Gr(N, 1), signal in R^N.
///
/// Both surrogates use the curvature bound from [`lipschitz_bound`] divided
/// by `step_scale`; a scale above 1 gives steps longer than `1/L` and
/// surrogates that no longer majorize.
pub struct DeconvBlockProblem {
    inner: Arc<Inner>,
    kernel: KernelSurrogate,
    signal: SignalSurrogate,
}

impl DeconvBlockProblem {
    pub fn new(problem: DeconvProblem) -> Self {
        Self::with_step_scale(problem, 1.0).expect("unit scale is valid")
    }

    pub fn with_step_scale(problem: DeconvProblem, step_scale: f64) -> Result<Self, DeconvError> {
        if !(step_scale > 0.0 && step_scale.is_finite()) {
            return Err(DeconvError::InvalidParameter(format!("step scale must be positive, got {step_scale}")));
        }
        let inner = Arc::new(Inner { problem, step_scale });
        Ok(Self {
            kernel: KernelSurrogate(Arc::clone(&inner)),
            signal: SignalSurrogate(Arc::clone(&inner)),
            inner,
        })
    }

    pub fn problem(&self) -> &DeconvProblem {
        &self.inner.problem
    }

    pub fn step_scale(&self) -> f64 {
        self.inner.step_scale
    }
}

impl BlockProblem for DeconvBlockProblem {
    fn dims(&self) -> Dims {
        let n = self.inner.problem.len();
        Dims { n, d: 1, convex_len: n }
    }

    fn cost(&self, g: &GrassmannPoint, c: &DVector<f64>) -> f64 {
        deconv_cost(&self.inner.problem, &DeconvState { a: g.clone(), x: c.clone() }).expect("validated dimensions")
    }

    fn grassmann_surrogate(&self) -> &dyn Surrogate<GrassmannPoint> {
        &self.kernel
    }

    fn convex_surrogate(&self) -> &dyn Surrogate<DVector<f64>> {
        &self.signal
    }

    /// The l1 term has a kink wherever the segment crosses `x_n = 0`.
    fn convex_direction_is_smooth(&self, c: &DVector<f64>, direction: &DVector<f64>, h: f64) -> bool {
        c.iter().zip(direction.iter()).all(|(&x, &d)| d == 0.0 || x.abs() > h * d.abs())
    }

    /// Tangent part of the kernel gradient, and the minimum-norm subgradient
    /// in the signal.
    fn gradient_norms(&self, g: &GrassmannPoint, c: &DVector<f64>) -> (f64, f64) {
        let p = &self.inner.problem;
        let state = DeconvState { a: g.clone(), x: c.clone() };
        let (a, _) = oriented_kernel(p, &state).expect("validated dimensions");
        let ga = grad_a(p, &a, c).expect("validated dimensions");
        let rg = &ga - &a * a.dot(&ga);
        let gx = grad_x(p, &a, c).expect("validated dimensions");
        let lambda = p.lambda();
        let sub = gx.zip_map(c, |g, x| {
            if x != 0.0 {
                g + lambda * x.signum()
            } else {
                super::soft_threshold(g, lambda)
            }
        });
        (rg.norm(), sub.norm())
    }
}

/// Cyclic kernel / signal updates from `init`.
pub fn solve_deconv(
    problem: &DeconvProblem,
    init: &DeconvState,
    config: &SolverConfig,
) -> Result<(IterationTrace, ConvergenceReport), MmError> {
    if init.x.len() != problem.len() || init.a.ambient_dim() != problem.len() {
        return Err(DeconvError::LengthMismatch { expected: problem.len(), found: init.x.len() }.into());
    }
    let block = DeconvBlockProblem::new(problem.clone());
    run_block_mm(&block, init.a.clone(), init.x.clone(), config)
}
