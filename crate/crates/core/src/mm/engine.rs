use nalgebra::DVector;

use super::audit::{audit_majorization, audit_tightness, AuditConfig};
use super::problem::{Block, BlockProblem, Iterate};
use super::stationarity::{stationarity_check, StationarityScore, STATIONARITY_STEP};
use super::MmError;
use crate::grassmann::{canonical_distance, GrassmannPoint};
use crate::linalg::derive_seed;

/// Largest cost increase per block update, relative to `max(1, |f|)`,
/// tolerated before the run is aborted.
pub const MONOTONE_SLACK: f64 = 1e-8;

const FEASIBILITY_TOL: f64 = 1e-9;
const OSCILLATION_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Stop when `d_c(G_{i+1}, G_i)` falls below this...
    pub dist_tol: f64,
    /// ...and the relative cost change falls below this.
    pub cost_tol: f64,
    /// Run tightness/majorization audits every k iterations (0 = never).
    pub audit_every: usize,
    pub audit_samples: usize,
    pub seed: u64,
    pub stationarity_directions: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            dist_tol: 1e-6,
            cost_tol: 1e-10,
            audit_every: 0,
            audit_samples: 20,
            seed: 0,
            stationarity_directions: 64,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), MmError> {
        if self.max_iter == 0 {
            return Err(MmError::InvalidConfig("max_iter must be at least 1".into()));
        }
        for (name, v) in [("dist_tol", self.dist_tol), ("cost_tol", self.cost_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MmError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// One outer iteration `i`: `(G_i, c_i) -> (G_{i+1}, c_i) -> (G_{i+1}, c_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `f(G_i, c_i)`
    pub f: f64,
    /// `f(G_{i+1}, c_i)`
    pub f_after_g: f64,
    /// `f(G_{i+1}, c_{i+1})`
    pub f_next: f64,
    /// `d_c(G_{i+1}, G_i)`
    pub dc_step: f64,
    /// Gradient norms at `(G_i, c_i)`.
    pub grad_norm_g: f64,
    pub grad_norm_c: f64,
    /// `Some(passed)` when audits ran at this iterate.
    pub audit_passed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Largest single-step increase of `f` across the whole run, including
    /// the intermediate `f_after_g` values. Non-positive for a descent run.
    pub fn max_increase(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| [r.f_after_g - r.f, r.f_next - r.f_after_g])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `f(G_i, c_i) >= f(G_{i+1}, c_i) >= f(G_{i+1}, c_{i+1})` within `slack`.
    pub fn descent_chain_holds(&self, slack: f64) -> bool {
        self.records.is_empty() || self.max_increase() <= slack
    }

    pub fn distances(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.dc_step)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditSummary {
    pub runs: usize,
    pub failures: usize,
    pub worst_tightness: Option<f64>,
    pub worst_majorization_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_cost: f64,
    pub final_distance: f64,
    pub final_grad_norm_g: f64,
    pub final_grad_norm_c: f64,
    pub stationarity: StationarityScore,
    pub audits: AuditSummary,
    /// Distance steps kept alternating up and down without settling; a
    /// symptom of non-unique block minimizers.
    pub oscillation_suspected: bool,
    pub final_iterate: Iterate,
}

/// Cyclic block MM:
/// `G_{i+1} = argmin g_G(. | G_i, c_i)`, then `c_{i+1} = argmin g_c(. | G_{i+1}, c_i)`.
pub fn run_block_mm<P: BlockProblem + ?Sized>(
    problem: &P,
    init_g: GrassmannPoint,
    init_c: DVector<f64>,
    config: &SolverConfig,
) -> Result<(IterationTrace, ConvergenceReport), MmError> {
    config.validate()?;
    let dims = problem.dims();
    if init_g.shape() != (dims.n, dims.d) {
        return Err(MmError::Dimension(format!(
            "initial G is {:?}, problem expects ({}, {})",
            init_g.shape(),
            dims.n,
            dims.d
        )));
    }
    if init_c.len() != dims.convex_len {
        return Err(MmError::Dimension(format!(
            "initial c has length {}, problem expects {}",
            init_c.len(),
            dims.convex_len
        )));
    }
    if !problem.contains_grassmann(&init_g) {
        return Err(MmError::InfeasibleBlock {
            block: Block::Grassmann,
            iteration: 0,
            reason: "initial G outside the feasible subset".into(),
        });
    }

    let mut g = init_g;
    let mut c = problem.project_convex(&init_c);
    let mut f = problem.cost(&g, &c);
    if !f.is_finite() {
        return Err(MmError::NonFiniteCost { iteration: 0 });
    }

    let audit_config = AuditConfig { samples: config.audit_samples.max(1), ..AuditConfig::default() };
    let mut audits = AuditSummary::default();
    let mut trace = IterationTrace::default();
    let mut converged = false;

    for iter in 0..config.max_iter {
        let anchor = Iterate::new(g.clone(), c.clone());
        let (grad_norm_g, grad_norm_c) = problem.gradient_norms(&g, &c);

        let audit_passed = if config.audit_every > 0 && iter % config.audit_every == 0 {
            let seed = derive_seed(config.seed, iter as u64);
            let anchors = std::slice::from_ref(&anchor);
            let mut passed = true;
            for block in [Block::Grassmann, Block::Convex] {
                let t = audit_tightness(problem, block, anchors, &audit_config);
                let m = audit_majorization(problem, block, anchors, audit_config.samples, seed, &audit_config);
                audits.worst_tightness = Some(audits.worst_tightness.map_or(t.worst, |w| w.max(t.worst)));
                audits.worst_majorization_margin =
                    Some(audits.worst_majorization_margin.map_or(m.worst, |w| w.min(m.worst)));
                passed &= t.passed && m.passed;
            }
            audits.runs += 1;
            if !passed {
                audits.failures += 1;
            }
            Some(passed)
        } else {
            None
        };

        let g_next = problem.grassmann_surrogate().minimize(&anchor)?;
        check_grassmann(problem, &g_next, iter)?;
        let f_after_g = problem.cost(&g_next, &c);
        check_descent(f, f_after_g, Block::Grassmann, iter)?;

        let c_anchor = Iterate::new(g_next.clone(), c.clone());
        let c_next = problem.convex_surrogate().minimize(&c_anchor)?;
        check_convex(problem, &c_next, iter)?;
        let f_next = problem.cost(&g_next, &c_next);
        check_descent(f_after_g, f_next, Block::Convex, iter)?;

        let dc_step = canonical_distance(&g_next, &g)?;
        trace.records.push(IterationRecord {
            iter,
            f,
            f_after_g,
            f_next,
            dc_step,
            grad_norm_g,
            grad_norm_c,
            audit_passed,
        });

        let change = (f - f_next).abs();
        let rel_change = if change == 0.0 { 0.0 } else { change / f.abs().max(1.0) };
        g = g_next;
        c = c_next;
        f = f_next;
        if dc_step < config.dist_tol && rel_change < config.cost_tol {
            converged = true;
            break;
        }
    }

    let (final_grad_norm_g, final_grad_norm_c) = problem.gradient_norms(&g, &c);
    let stationarity_seed = derive_seed(config.seed, u64::MAX);
    let score = stationarity_check(problem, &g, &c, config.stationarity_directions, stationarity_seed)?;
    let report = ConvergenceReport {
        converged,
        iterations: trace.len(),
        final_cost: f,
        final_distance: trace.records.last().map_or(0.0, |r| r.dc_step),
        final_grad_norm_g,
        final_grad_norm_c,
        stationarity: StationarityScore {
            score,
            directions: config.stationarity_directions,
            seed: stationarity_seed,
            step: STATIONARITY_STEP,
        },
        audits,
        oscillation_suspected: !converged && oscillating(&trace, config.dist_tol),
        final_iterate: Iterate::new(g, c),
    };
    Ok((trace, report))
}

fn check_grassmann<P: BlockProblem + ?Sized>(
    problem: &P,
    g: &GrassmannPoint,
    iteration: usize,
) -> Result<(), MmError> {
    let dims = problem.dims();
    let reason = if g.shape() != (dims.n, dims.d) {
        Some(format!("shape {:?}", g.shape()))
    } else if !problem.contains_grassmann(g) {
        Some("outside the feasible subset".to_string())
    } else {
        None
    };
    match reason {
        Some(reason) => Err(MmError::InfeasibleBlock { block: Block::Grassmann, iteration, reason }),
        None => Ok(()),
    }
}

fn check_convex<P: BlockProblem + ?Sized>(
    problem: &P,
    c: &DVector<f64>,
    iteration: usize,
) -> Result<(), MmError> {
    let reason = if c.len() != problem.dims().convex_len {
        Some(format!("length {}", c.len()))
    } else if c.iter().any(|v| !v.is_finite()) {
        Some("non-finite entries".to_string())
    } else {
        let gap = (problem.project_convex(c) - c).amax();
        (gap > FEASIBILITY_TOL * c.amax().max(1.0)).then(|| format!("distance {gap:e} from the convex set"))
    };
    match reason {
        Some(reason) => Err(MmError::InfeasibleBlock { block: Block::Convex, iteration, reason }),
        None => Ok(()),
    }
}

fn check_descent(before: f64, after: f64, block: Block, iteration: usize) -> Result<(), MmError> {
    if !after.is_finite() {
        return Err(MmError::NonFiniteCost { iteration });
    }
    let increase = after - before;
    if increase > MONOTONE_SLACK * before.abs().max(1.0) {
        return Err(MmError::MonotonicityViolation { block, iteration, increase });
    }
    Ok(())
}

/// Alternating distance steps that refuse to shrink over the last window.
fn oscillating(trace: &IterationTrace, dist_tol: f64) -> bool {
    let d: Vec<f64> = trace.distances().collect();
    if d.len() < OSCILLATION_WINDOW {
        return false;
    }
    let w = &d[d.len() - OSCILLATION_WINDOW..];
    let flips = w
        .windows(3)
        .filter(|s| (s[1] - s[0]) * (s[2] - s[1]) < 0.0)
        .count();
    let half = OSCILLATION_WINDOW / 2;
    let early = w[..half].iter().copied().fold(0.0, f64::max);
    let late = w[half..].iter().copied().fold(0.0, f64::max);
    flips * 4 >= (OSCILLATION_WINDOW - 2) * 3 && late >= 0.5 * early && late > dist_tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::{make_point, random_point};
    use crate::mm::{FnProblem, FnSurrogate, Dims};
    use nalgebra::{dmatrix, DMatrix};

    /// f(G, c) = -tr(G^T A G) + |c - c*|^2 with exact block minimizers.
    fn quadratic_problem() -> (FnProblem, GrassmannPoint, DVector<f64>) {
        let a = dmatrix![4.0, 0.0, 0.0; 0.0, 2.0, 0.0; 0.0, 0.0, 1.0];
        let target = DVector::from_vec(vec![1.0, -2.0]);
        let a1 = a.clone();
        let t1 = target.clone();
        let cost = move |g: &GrassmannPoint, c: &DVector<f64>| {
            -(g.basis().transpose() * &a1 * g.basis()).trace() + (c - &t1).norm_squared()
        };
        let cost_g = cost.clone();
        let cost_c = cost.clone();
        let best = make_point(&dmatrix![1.0; 0.0; 0.0]).unwrap();
        let best_g = best.clone();
        let t2 = target.clone();
        let problem = FnProblem::new(
            Dims { n: 3, d: 1, convex_len: 2 },
            cost,
            FnSurrogate::new(move |g, anchor| cost_g(g, &anchor.c), move |_| Ok(best_g.clone())),
            FnSurrogate::new(move |c, anchor| cost_c(&anchor.g, c), move |_| Ok(t2.clone())),
        );
        (problem, best, target)
    }

    #[test]
    fn fixed_point_converges_in_one_iteration() {
        let (problem, best, target) = quadratic_problem();
        let (trace, report) = run_block_mm(&problem, best, target, &SolverConfig::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        assert_eq!(trace.records[0].dc_step, 0.0);
        assert!(report.stationarity.score >= -1e-4);
    }

    #[test]
    fn converges_from_random_start() {
        let (problem, _, _) = quadratic_problem();
        let g0 = random_point(5, 3, 1).unwrap();
        let (trace, report) =
            run_block_mm(&problem, g0, DVector::zeros(2), &SolverConfig::default()).unwrap();
        assert!(report.converged);
        assert!(trace.descent_chain_holds(1e-10));
        assert!((report.final_cost + 4.0).abs() < 1e-12);
    }

    #[test]
    fn increasing_surrogate_is_rejected() {
        let worst = make_point(&dmatrix![0.0; 0.0; 1.0]).unwrap();
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0, 1.0]));
        let cost = move |g: &GrassmannPoint, _: &DVector<f64>| -(g.basis().transpose() * &a * g.basis()).trace();
        let cost_g = cost.clone();
        let cost_c = cost.clone();
        let problem = FnProblem::new(
            Dims { n: 3, d: 1, convex_len: 1 },
            cost,
            FnSurrogate::new(move |g, a| cost_g(g, &a.c), move |_| Ok(worst.clone())),
            FnSurrogate::new(move |c, a| cost_c(&a.g, c), |a: &Iterate| Ok(a.c.clone())),
        );
        let g0 = make_point(&dmatrix![1.0; 0.0; 0.0]).unwrap();
        let err = run_block_mm(&problem, g0, DVector::zeros(1), &SolverConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            MmError::MonotonicityViolation { block: Block::Grassmann, iteration: 0, .. }
        ));
    }

    #[test]
    fn infeasible_convex_value_names_the_block() {
        let (problem, best, target) = quadratic_problem();
        let problem = problem.with_projection(|c| c.map(|v| v.max(0.0)));
        let err = run_block_mm(&problem, best, target, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, MmError::InfeasibleBlock { block: Block::Convex, .. }));
    }

    #[test]
    fn config_is_validated() {
        let (problem, best, target) = quadratic_problem();
        let config = SolverConfig { dist_tol: 0.0, ..SolverConfig::default() };
        assert!(matches!(
            run_block_mm(&problem, best, target, &config),
            Err(MmError::InvalidConfig(_))
        ));
    }

    #[test]
    fn audits_are_recorded_when_enabled() {
        let (problem, _, _) = quadratic_problem();
        let g0 = random_point(8, 3, 1).unwrap();
        let config = SolverConfig { audit_every: 1, audit_samples: 5, ..SolverConfig::default() };
        let (trace, report) = run_block_mm(&problem, g0, DVector::zeros(2), &config).unwrap();
        assert!(trace.records.iter().all(|r| r.audit_passed == Some(true)));
        assert_eq!(report.audits.runs, trace.len());
        assert_eq!(report.audits.failures, 0);
    }

    #[test]
    fn alternating_steps_are_flagged() {
        let records = (0..40)
            .map(|i| IterationRecord {
                iter: i,
                f: 1.0,
                f_after_g: 1.0,
                f_next: 1.0,
                dc_step: if i % 2 == 0 { 0.3 } else { 0.1 },
                grad_norm_g: 0.0,
                grad_norm_c: 0.0,
                audit_passed: None,
            })
            .collect();
        assert!(oscillating(&IterationTrace { records }, 1e-6));
    }
}
