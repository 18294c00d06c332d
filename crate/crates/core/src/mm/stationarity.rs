use nalgebra::DVector;

use super::problem::BlockProblem;
use super::MmError;
use crate::grassmann::{exp_map, random_tangent, GrassmannPoint};
use crate::linalg::{derive_seed, gaussian_vector};

/// Forward-difference step of the stationarity probes.
pub const STATIONARITY_STEP: f64 = 1e-5;

/// Scores at or above this value count as stationary.
pub const STATIONARITY_THRESHOLD: f64 = -1e-4;

/// Worst sampled one-sided directional slope, with its sampling metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityScore {
    pub score: f64,
    pub directions: usize,
    pub seed: u64,
    pub step: f64,
}

impl StationarityScore {
    pub fn is_stationary(&self) -> bool {
        self.score >= STATIONARITY_THRESHOLD
    }
}

/// Minimum forward-difference slope over `directions` geodesic probes at `g`
/// and `directions` line probes at `c`.
///
/// Convex probes move to the projection of `c + h delta`; the slope is taken
/// along the realised displacement, and directions the projection collapses
/// (pointing out of the feasible set) are dropped.
pub fn stationarity_check<P: BlockProblem + ?Sized>(
    problem: &P,
    g: &GrassmannPoint,
    c: &DVector<f64>,
    directions: usize,
    seed: u64,
) -> Result<f64, MmError> {
    if directions == 0 {
        return Err(MmError::InvalidConfig("stationarity check needs at least one direction".into()));
    }
    let h = STATIONARITY_STEP;
    let f0 = problem.cost(g, c);
    let mut worst = f64::INFINITY;
    for k in 0..directions {
        let dir = random_tangent(derive_seed(seed, 2 * k as u64), g);
        if dir.norm() > 0.0 {
            let moved = exp_map(g, &dir, h)?;
            worst = worst.min((problem.cost(&moved, c) - f0) / h);
        }
        if c.is_empty() {
            continue;
        }
        let z = gaussian_vector(derive_seed(seed, 2 * k as u64 + 1), c.len());
        let norm = z.norm();
        if norm == 0.0 {
            continue;
        }
        let target = problem.project_convex(&(c + z * (h / norm)));
        let step = &target - c;
        let len = step.norm();
        if len <= 1e-3 * h {
            continue;
        }
        worst = worst.min((problem.cost(g, &target) - f0) / len);
    }
    Ok(worst)
}
