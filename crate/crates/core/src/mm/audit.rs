//! Sampled checks of the surrogate conditions.
//!
//! Each audit evaluates the surrogate and the cost at seeded samples and
//! reports the worst deviation. A sampled audit can refute a condition but
//! never prove it; an audit that checked no samples does not pass.

use std::f64::consts::FRAC_PI_2;
use std::f64::consts::FRAC_PI_4;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::problem::{Block, BlockProblem, Iterate};
use crate::grassmann::{
    aligned_geodesic_at, build_aligned_spec, exp_map, principal_angles, random_point,
    random_tangent, GrassmannPoint,
};
use crate::linalg::{derive_seed, gaussian_vector, random_orthonormal};

/// Central-difference steps for derivative matching.
pub const FD_STEPS: [f64; 2] = [1e-4, 1e-5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuditKind {
    Tightness,
    Majorization,
    DerivativeMatch,
    Quasiconvexity,
    Homogeneity,
}

impl AuditKind {
    /// Label of the surrogate condition the audit samples.
    pub fn assumption(self) -> &'static str {
        match self {
            AuditKind::Tightness => "A1",
            AuditKind::Majorization => "A2",
            AuditKind::DerivativeMatch => "A3",
            AuditKind::Quasiconvexity => "A5",
            AuditKind::Homogeneity => "homogeneity",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AuditKind::Tightness => "tightness",
            AuditKind::Majorization => "majorization",
            AuditKind::DerivativeMatch => "derivative_match",
            AuditKind::Quasiconvexity => "quasiconvexity",
            AuditKind::Homogeneity => "homogeneity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditResult {
    pub kind: AuditKind,
    /// `None` for whole-cost audits (homogeneity).
    pub block: Option<Block>,
    pub passed: bool,
    /// Worst observed value: max deviation for tightness, derivative,
    /// quasiconvexity and homogeneity; minimum margin `g - f` for
    /// majorization.
    pub worst: f64,
    pub threshold: f64,
    pub checked: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditThresholds {
    pub tightness: f64,
    pub majorization: f64,
    pub derivative_rel: f64,
    pub quasiconvexity: f64,
    pub homogeneity: f64,
}

impl Default for AuditThresholds {
    fn default() -> Self {
        Self {
            tightness: 1e-9,
            majorization: 1e-9,
            derivative_rel: 1e-4,
            quasiconvexity: 1e-8,
            homogeneity: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub samples: usize,
    pub directions: usize,
    pub pairs: usize,
    pub t_samples: usize,
    /// Quasiconvexity pairs are drawn within this geodesic radius of the anchor.
    pub radius: f64,
    pub thresholds: AuditThresholds,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            samples: 200,
            directions: 16,
            pairs: 32,
            t_samples: 11,
            radius: FRAC_PI_4,
            thresholds: AuditThresholds::default(),
        }
    }
}

fn result(kind: AuditKind, block: Option<Block>, worst: f64, ok: bool, threshold: f64, checked: usize, skipped: usize) -> AuditResult {
    AuditResult { kind, block, passed: ok && checked > 0, worst, threshold, checked, skipped }
}

fn eval_g<P: BlockProblem + ?Sized>(p: &P, cand: &GrassmannPoint, anchor: &Iterate) -> (f64, f64) {
    (p.grassmann_surrogate().evaluate(cand, anchor), p.cost(cand, &anchor.c))
}

fn eval_c<P: BlockProblem + ?Sized>(p: &P, cand: &DVector<f64>, anchor: &Iterate) -> (f64, f64) {
    (p.convex_surrogate().evaluate(cand, anchor), p.cost(&anchor.g, cand))
}

/// Random point: alternately uniform on the manifold and a geodesic step of
/// random length (up to pi/2) from the anchor.
fn grassmann_candidate(anchor: &GrassmannPoint, seed: u64, k: usize) -> GrassmannPoint {
    let (n, d) = anchor.shape();
    if k.is_multiple_of(2) {
        return random_point(seed, n, d).expect("anchor dimensions are valid");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length = rng.random_range(0.0..FRAC_PI_2);
    geodesic_sample(anchor, derive_seed(seed, 1), length)
}

fn geodesic_sample(anchor: &GrassmannPoint, seed: u64, length: f64) -> GrassmannPoint {
    let dir = random_tangent(seed, anchor);
    exp_map(anchor, &dir, length).expect("unit direction with length <= pi/2")
}

/// `c + s z` with `z` a random unit vector and `s` log-uniform in
/// `[1e-3, 10] * max(1, |c|_inf)`, projected onto the convex set.
fn convex_candidate<P: BlockProblem + ?Sized>(p: &P, c: &DVector<f64>, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 10f64.powf(rng.random_range(-3.0..1.0)) * c.amax().max(1.0);
    let z = unit_vector(derive_seed(seed, 1), c.len());
    p.project_convex(&(c + z * scale))
}

fn unit_vector(seed: u64, n: usize) -> DVector<f64> {
    let z = gaussian_vector(seed, n);
    let norm = z.norm();
    if norm > 0.0 {
        z / norm
    } else {
        DVector::from_element(n, 1.0 / (n as f64).sqrt())
    }
}

/// A1: `g(x | x) = f(x)` at each anchor.
pub fn audit_tightness<P: BlockProblem + ?Sized>(
    problem: &P,
    block: Block,
    anchors: &[Iterate],
    config: &AuditConfig,
) -> AuditResult {
    let worst = anchors
        .iter()
        .map(|a| {
            let (g, f) = match block {
                Block::Grassmann => eval_g(problem, &a.g, a),
                Block::Convex => eval_c(problem, &a.c, a),
            };
            (g - f).abs()
        })
        .fold(0.0, f64::max);
    let thr = config.thresholds.tightness;
    result(AuditKind::Tightness, Some(block), worst, worst <= thr, thr, anchors.len(), 0)
}

/// A2: `g(y | x) >= f(y)` for random feasible `y` in the audited block.
pub fn audit_majorization<P: BlockProblem + ?Sized>(
    problem: &P,
    block: Block,
    anchors: &[Iterate],
    samples: usize,
    seed: u64,
    config: &AuditConfig,
) -> AuditResult {
    let mut worst = f64::INFINITY;
    let mut checked = 0;
    for (i, anchor) in anchors.iter().enumerate() {
        for k in 0..samples {
            let s = derive_seed(derive_seed(seed, i as u64), k as u64);
            let (g, f) = match block {
                Block::Grassmann => eval_g(problem, &grassmann_candidate(&anchor.g, s, k), anchor),
                Block::Convex => eval_c(problem, &convex_candidate(problem, &anchor.c, s), anchor),
            };
            worst = worst.min(g - f);
            checked += 1;
        }
    }
    let thr = config.thresholds.majorization;
    result(AuditKind::Majorization, Some(block), worst, worst >= -thr, thr, checked, 0)
}

/// A3: directional derivatives of `g(. | x)` and `f` agree at `x`.
///
/// Grassmann directions are followed along geodesics, convex directions
/// along straight lines; both sides use central differences at every step
/// in [`FD_STEPS`]. Convex directions the problem flags as non-smooth are
/// skipped.
pub fn audit_derivative_match<P: BlockProblem + ?Sized>(
    problem: &P,
    block: Block,
    anchor: &Iterate,
    directions: usize,
    seed: u64,
    config: &AuditConfig,
) -> AuditResult {
    let h_max = FD_STEPS.iter().copied().fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    let (mut checked, mut skipped) = (0, 0);
    for k in 0..directions {
        let s = derive_seed(seed, k as u64);
        let slopes: Vec<(f64, f64)> = match block {
            Block::Grassmann => {
                let dir = random_tangent(s, &anchor.g);
                FD_STEPS
                    .iter()
                    .map(|&h| {
                        let plus = exp_map(&anchor.g, &dir, h).expect("short step");
                        let minus = exp_map(&anchor.g, &dir, -h).expect("short step");
                        let (gp, fp) = eval_g(problem, &plus, anchor);
                        let (gm, fm) = eval_g(problem, &minus, anchor);
                        ((gp - gm) / (2.0 * h), (fp - fm) / (2.0 * h))
                    })
                    .collect()
            }
            Block::Convex => {
                let dir = unit_vector(s, anchor.c.len());
                if !problem.convex_direction_is_smooth(&anchor.c, &dir, h_max) {
                    skipped += 1;
                    continue;
                }
                FD_STEPS
                    .iter()
                    .map(|&h| {
                        let plus = problem.project_convex(&(&anchor.c + &dir * h));
                        let minus = problem.project_convex(&(&anchor.c - &dir * h));
                        let (gp, fp) = eval_c(problem, &plus, anchor);
                        let (gm, fm) = eval_c(problem, &minus, anchor);
                        ((gp - gm) / (2.0 * h), (fp - fm) / (2.0 * h))
                    })
                    .collect()
            }
        };
        for (dg, df) in slopes {
            let mismatch = (dg - df).abs() / dg.abs().max(df.abs()).max(1.0);
            worst = worst.max(mismatch);
        }
        checked += 1;
    }
    let thr = config.thresholds.derivative_rel;
    result(AuditKind::DerivativeMatch, Some(block), worst, worst <= thr, thr, checked, skipped)
}

/// A5: `g(Gamma(t) | x) <= max(g(X | x), g(Y | x))` along geodesics (or
/// segments for the convex block) joining sampled pairs near the anchor.
/// Pairs with a principal angle at pi/2 have no unique geodesic and are
/// skipped.
pub fn audit_quasiconvexity<P: BlockProblem + ?Sized>(
    problem: &P,
    block: Block,
    anchor: &Iterate,
    pairs: usize,
    t_samples: usize,
    seed: u64,
    config: &AuditConfig,
) -> AuditResult {
    let ts: Vec<f64> = (0..t_samples.max(2)).map(|k| k as f64 / (t_samples.max(2) - 1) as f64).collect();
    let mut worst = f64::NEG_INFINITY;
    let (mut checked, mut skipped) = (0, 0);
    for k in 0..pairs {
        let s = derive_seed(seed, k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let values: Vec<f64> = match block {
            Block::Grassmann => {
                let x = geodesic_sample(&anchor.g, derive_seed(s, 1), rng.random_range(0.0..config.radius));
                let y = geodesic_sample(&anchor.g, derive_seed(s, 2), rng.random_range(0.0..config.radius));
                let largest = principal_angles(&x, &y).map(|a| a.largest()).unwrap_or(FRAC_PI_2);
                if largest >= FRAC_PI_2 - 1e-8 {
                    skipped += 1;
                    continue;
                }
                let Ok(spec) = build_aligned_spec(&x, &y) else {
                    skipped += 1;
                    continue;
                };
                let mut v = vec![
                    problem.grassmann_surrogate().evaluate(&x, anchor),
                    problem.grassmann_surrogate().evaluate(&y, anchor),
                ];
                for &t in &ts {
                    let p = aligned_geodesic_at(&spec, t).expect("valid spec");
                    v.push(problem.grassmann_surrogate().evaluate(&p, anchor));
                }
                v
            }
            Block::Convex => {
                let x = convex_candidate(problem, &anchor.c, derive_seed(s, 1));
                let y = convex_candidate(problem, &anchor.c, derive_seed(s, 2));
                let mut v = vec![
                    problem.convex_surrogate().evaluate(&x, anchor),
                    problem.convex_surrogate().evaluate(&y, anchor),
                ];
                for &t in &ts {
                    let p = &x * (1.0 - t) + &y * t;
                    v.push(problem.convex_surrogate().evaluate(&p, anchor));
                }
                v
            }
        };
        let ends = values[0].max(values[1]);
        for v in &values[2..] {
            worst = worst.max(v - ends);
        }
        checked += 1;
    }
    let thr = config.thresholds.quasiconvexity;
    result(AuditKind::Quasiconvexity, Some(block), worst, worst <= thr, thr, checked, skipped)
}

/// `f(G R, c) = f(G, c)` for sampled orthogonal `R`.
pub fn audit_homogeneity<P: BlockProblem + ?Sized>(
    problem: &P,
    anchors: &[Iterate],
    rotations: usize,
    seed: u64,
    config: &AuditConfig,
) -> AuditResult {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (i, anchor) in anchors.iter().enumerate() {
        let d = anchor.g.dim();
        let base = problem.cost(&anchor.g, &anchor.c);
        for k in 0..rotations {
            let r = random_orthonormal(derive_seed(derive_seed(seed, i as u64), k as u64), d, d)
                .expect("square draw");
            let Ok(rotated) = anchor.g.rotated(&r) else { continue };
            worst = worst.max((problem.cost(&rotated, &anchor.c) - base).abs());
            checked += 1;
        }
    }
    let thr = config.thresholds.homogeneity;
    result(AuditKind::Homogeneity, None, worst, worst <= thr, thr, checked, 0)
}
