use nalgebra::DVector;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{check_len, circular_convolution, circular_correlation, DeconvError, DeconvState};
use crate::grassmann::GrassmannPoint;
use crate::linalg::{derive_seed, gaussian_vector};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub true_a: DVector<f64>,
    pub true_x: DVector<f64>,
    pub y: DVector<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub kernel_support: usize,
    /// Number of nonzeros in `true_x`.
    pub spikes: usize,
}

impl SyntheticInstance {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

fn check_common(n: usize, kernel_support: usize, noise_sigma: f64) -> Result<(), DeconvError> {
    if n == 0 {
        return Err(DeconvError::InvalidParameter("signal length must be positive".into()));
    }
    if kernel_support == 0 || kernel_support > n {
        return Err(DeconvError::InvalidParameter(format!(
            "kernel_support must lie in 1..={n}, got {kernel_support}"
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(DeconvError::InvalidParameter(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    Ok(())
}

fn kernel(seed: u64, n: usize, support: usize) -> DVector<f64> {
    let head = gaussian_vector(derive_seed(seed, 1), support).normalize();
    DVector::from_fn(n, |i, _| if i < support { head[i] } else { 0.0 })
}

fn assemble(
    seed: u64,
    true_a: DVector<f64>,
    true_x: DVector<f64>,
    kernel_support: usize,
    noise_sigma: f64,
) -> SyntheticInstance {
    let n = true_x.len();
    let clean = circular_convolution(&true_a, &true_x).expect("equal lengths");
    let y = if noise_sigma > 0.0 {
        clean + gaussian_vector(derive_seed(seed, 3), n) * noise_sigma
    } else {
        clean
    };
    let spikes = true_x.iter().filter(|v| **v != 0.0).count();
    SyntheticInstance { true_a, true_x, y, noise_sigma, seed, kernel_support, spikes }
}

/// Bernoulli(`sparsity`)-Gaussian signal convolved with a unit Gaussian
/// kernel supported on the first `kernel_support` indices, plus
/// `N(0, noise_sigma^2)` noise. A draw with no nonzeros gets one Gaussian
/// spike at a uniform position, so `y` is never identically zero.
pub fn generate_instance(
    seed: u64,
    n: usize,
    sparsity: f64,
    kernel_support: usize,
    noise_sigma: f64,
) -> Result<SyntheticInstance, DeconvError> {
    check_common(n, kernel_support, noise_sigma)?;
    if !(sparsity > 0.0 && sparsity < 1.0) {
        return Err(DeconvError::InvalidParameter(format!("sparsity must lie in (0, 1), got {sparsity}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let mut x = DVector::zeros(n);
    for v in x.iter_mut() {
        let on = rng.random_bool(sparsity);
        let amp: f64 = rng.sample(StandardNormal);
        if on {
            *v = amp;
        }
    }
    if x.iter().all(|v| *v == 0.0) {
        let at = rng.random_range(0..n);
        x[at] = rng.sample(StandardNormal);
    }
    Ok(assemble(seed, kernel(seed, n, kernel_support), x, kernel_support, noise_sigma))
}

/// Like [`generate_instance`] with exactly `spikes` nonzeros at uniformly
/// drawn distinct positions.
pub fn generate_spike_instance(
    seed: u64,
    n: usize,
    spikes: usize,
    kernel_support: usize,
    noise_sigma: f64,
) -> Result<SyntheticInstance, DeconvError> {
    check_common(n, kernel_support, noise_sigma)?;
    if spikes == 0 || spikes > n {
        return Err(DeconvError::InvalidParameter(format!("spikes must lie in 1..={n}, got {spikes}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let mut x = DVector::zeros(n);
    for at in sample(&mut rng, n, spikes).into_iter() {
        x[at] = rng.sample(StandardNormal);
    }
    Ok(assemble(seed, kernel(seed, n, kernel_support), x, kernel_support, noise_sigma))
}

/// Max over circular shifts `s` and signs of `|<shift(a, s), true_a>|`.
pub fn recovery_score(estimate: &DeconvState, truth: &SyntheticInstance) -> Result<f64, DeconvError> {
    let a = estimate.kernel();
    check_len(truth.len(), a.len())?;
    let n = a.len();
    let mut best = 0.0f64;
    for s in 0..n {
        let dot: f64 = (0..n).map(|i| a[(i + n - s) % n] * truth.true_a[i]).sum();
        best = best.max(dot.abs());
    }
    Ok(best.min(1.0))
}

/// Segment of `y` of length `min(2 * kernel_support, N)` centred at the peak
/// of `|y|`, moved to the leading indices and normalized; zero signal.
pub fn default_init(y: &DVector<f64>, kernel_support: usize) -> Result<DeconvState, DeconvError> {
    let n = y.len();
    check_common(n, kernel_support, 0.0)?;
    let width = (2 * kernel_support).min(n);
    let start = y.iamax() + n - width / 2;
    let mut a = DVector::zeros(n);
    for i in 0..width {
        a[i] = y[(start + i) % n];
    }
    let norm = a.norm();
    if norm == 0.0 {
        a[0] = 1.0;
    } else {
        a /= norm;
    }
    DeconvState::from_point(GrassmannPoint::from_vector(&a)?, DVector::zeros(n))
}

/// Uniform random kernel and zero signal.
pub fn random_init(seed: u64, n: usize) -> DeconvState {
    let a = gaussian_vector(seed, n).normalize();
    DeconvState::from_point(GrassmannPoint::from_vector(&a).expect("unit vector"), DVector::zeros(n))
        .expect("matching lengths")
}

/// `0.1 * |corr(a0, y)|_inf`.
pub fn default_lambda(y: &DVector<f64>, init: &DeconvState) -> Result<f64, DeconvError> {
    Ok(0.1 * circular_correlation(&init.kernel(), y)?.amax())
}
