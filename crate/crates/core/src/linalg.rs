//! Dense linear-algebra kernels: thin SVD (one-sided Jacobi), Gram-Schmidt
//! QR and seeded random orthonormal matrices.
//!
//! Every routine is a pure function of its inputs. The SVD fixes a sign
//! convention (largest-magnitude entry of each left singular vector is
//! non-negative) so that downstream geometry is reproducible bit-for-bit.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub type DenseMatrix = DMatrix<f64>;

/// Shared numeric tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub orthonormality: f64,
    pub reconstruction: f64,
    pub rank_cutoff: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        TOLERANCES
    }
}

pub const TOLERANCES: Tolerances = Tolerances {
    orthonormality: 1e-10,
    reconstruction: 1e-9,
    rank_cutoff: 1e-12,
};

/// Sweep cap for the Jacobi iteration.
pub const MAX_JACOBI_SWEEPS: usize = 80;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is empty ({rows}x{cols})")]
    Empty { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("SVD did not converge after {sweeps} sweeps on a {rows}x{cols} matrix")]
    NoConvergence { rows: usize, cols: usize, sweeps: usize },
    #[error("matrix is rank deficient at column {column}")]
    RankDeficient { column: usize },
    #[error("cannot draw {cols} orthonormal columns in dimension {rows}")]
    Dimension { rows: usize, cols: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvd {
    /// m x k, orthonormal columns.
    pub u: DMatrix<f64>,
    /// k singular values, descending.
    pub s: DVector<f64>,
    /// n x k, orthonormal columns.
    pub v: DMatrix<f64>,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QrFactors {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

pub(crate) fn ensure_valid(a: &DMatrix<f64>) -> Result<(), LinalgError> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(LinalgError::Empty { rows: a.nrows(), cols: a.ncols() });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(())
}

/// Thin SVD `A = U diag(S) V^T` with `k = min(m, n)`.
pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd, LinalgError> {
    ensure_valid(a)?;
    let (m, n) = a.shape();
    let mut svd = if m >= n {
        jacobi_tall(a)?
    } else {
        let t = jacobi_tall(&a.transpose())?;
        ThinSvd { u: t.v, s: t.s, v: t.u }
    };
    fix_signs(&mut svd);
    Ok(svd)
}

/// One-sided (Hestenes) Jacobi on a tall matrix, m >= n.
fn jacobi_tall(a: &DMatrix<f64>) -> Result<ThinSvd, LinalgError> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let threshold = 4.0 * f64::EPSILON;
    // Columns below this squared norm are rounding noise; rotating them
    // against anything never settles.
    let negligible = (m as f64 * f64::EPSILON * a.norm()).powi(2);

    let mut converged = n == 1;
    for _ in 0..MAX_JACOBI_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if alpha <= negligible || beta <= negligible || gamma.abs() <= threshold * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(LinalgError::NoConvergence { rows: m, cols: n, sweeps: MAX_JACOBI_SWEEPS });
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let s_max = norms[order[0]];
    let null_cut = s_max * (m.max(n) as f64) * f64::EPSILON;
    let mut u = DMatrix::<f64>::zeros(m, n);
    let mut vs = DMatrix::<f64>::zeros(n, n);
    let mut s = DVector::<f64>::zeros(n);
    let mut null_cols = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        s[k] = norms[j];
        vs.set_column(k, &v.column(j));
        if norms[j] > null_cut && norms[j] > 0.0 {
            u.set_column(k, &(w.column(j) / norms[j]));
        } else {
            null_cols.push(k);
        }
    }
    complete_orthonormal(&mut u, &null_cols);
    Ok(ThinSvd { u, s, v: vs })
}

/// Fills the listed columns of `u` with unit vectors orthogonal to every
/// other column, trying canonical basis vectors in order.
fn complete_orthonormal(u: &mut DMatrix<f64>, fill: &[usize]) {
    if fill.is_empty() {
        return;
    }
    let m = u.nrows();
    let mut filled: Vec<bool> = (0..u.ncols()).map(|j| !fill.contains(&j)).collect();
    let mut candidate = 0;
    for &col in fill {
        while candidate < m {
            let mut e = DVector::<f64>::zeros(m);
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (j, _) in filled.iter().enumerate().filter(|(_, f)| **f) {
                    let proj = u.column(j).dot(&e);
                    e.axpy(-proj, &u.column(j), 1.0);
                }
            }
            let norm = e.norm();
            if norm > 0.5 {
                u.set_column(col, &(e / norm));
                filled[col] = true;
                break;
            }
        }
    }
}

fn fix_signs(svd: &mut ThinSvd) {
    for j in 0..svd.u.ncols() {
        let mut best = 0;
        for i in 1..svd.u.nrows() {
            if svd.u[(i, j)].abs() > svd.u[(best, j)].abs() {
                best = i;
            }
        }
        if svd.u[(best, j)] < 0.0 {
            svd.u.column_mut(j).neg_mut();
            svd.v.column_mut(j).neg_mut();
        }
    }
}

/// Thin QR by modified Gram-Schmidt with one reorthogonalization pass.
/// The diagonal of `r` is non-negative.
pub fn qr_orthonormalize(a: &DMatrix<f64>) -> Result<QrFactors, LinalgError> {
    ensure_valid(a)?;
    let (m, n) = a.shape();
    let scale = (0..n).map(|j| a.column(j).norm()).fold(0.0, f64::max);
    let mut q = DMatrix::<f64>::zeros(m, n);
    let mut r = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut v: DVector<f64> = a.column(j).into_owned();
        for _ in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&v);
                r[(i, j)] += proj;
                v.axpy(-proj, &q.column(i), 1.0);
            }
        }
        let norm = v.norm();
        if j >= m || norm <= TOLERANCES.rank_cutoff * scale || norm == 0.0 {
            return Err(LinalgError::RankDeficient { column: j });
        }
        r[(j, j)] = norm;
        q.set_column(j, &(v / norm));
    }
    Ok(QrFactors { q, r })
}

/// Standard-Gaussian n x d matrix from a seeded ChaCha stream.
pub fn gaussian_matrix(seed: u64, n: usize, d: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
}

pub fn gaussian_vector(seed: u64, n: usize) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
}

/// Orthonormal n x d matrix: Q factor of a seeded Gaussian matrix.
pub fn random_orthonormal(seed: u64, n: usize, d: usize) -> Result<DMatrix<f64>, LinalgError> {
    if d > n || d == 0 {
        return Err(LinalgError::Dimension { rows: n, cols: d });
    }
    // A Gaussian matrix is full rank almost surely; redraw on the
    // measure-zero failure so the call stays total.
    let mut stream = 0;
    loop {
        let g = gaussian_matrix(derive_seed(seed, stream), n, d);
        match qr_orthonormalize(&g) {
            Ok(f) => return Ok(f.q),
            Err(LinalgError::RankDeficient { .. }) if stream < 8 => stream += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Mixes a base seed with a stream index (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Largest absolute entry of `Q^T Q - I`.
pub fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let k = g.nrows();
    (g - DMatrix::<f64>::identity(k, k)).amax()
}
