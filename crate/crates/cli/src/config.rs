//! Experiment configuration: one JSON document, validated before any work.

use std::fmt;
use std::path::{Path, PathBuf};

use grassmm::mm::SolverConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    pub seeds: Vec<u64>,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemConfig {
    Deconv(DeconvSettings),
    SubspaceMean(SubspaceMeanSettings),
}

impl ProblemConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemConfig::Deconv(_) => "deconv",
            ProblemConfig::SubspaceMean(_) => "subspace-mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// Segment of the observation around its peak.
    #[default]
    Window,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeconvSettings {
    #[serde(default = "defaults::deconv_n")]
    pub n: usize,
    #[serde(default = "defaults::kernel_support")]
    pub kernel_support: usize,
    /// Bernoulli rate of the signal; mutually exclusive with `spikes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    /// Exact number of nonzeros in the signal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spikes: Option<usize>,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Defaults to `0.1 * |corr(a0, y)|_inf`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Steps are `step_scale / L`.
    #[serde(default = "defaults::one")]
    pub step_scale: f64,
    #[serde(default)]
    pub init: InitKind,
}

impl Default for DeconvSettings {
    fn default() -> Self {
        Self {
            n: defaults::deconv_n(),
            kernel_support: defaults::kernel_support(),
            sparsity: None,
            spikes: None,
            noise_sigma: 0.0,
            lambda: None,
            step_scale: 1.0,
            init: InitKind::Window,
        }
    }
}

impl DeconvSettings {
    pub const DEFAULT_SPARSITY: f64 = 0.05;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceMeanSettings {
    #[serde(default = "defaults::sm_n")]
    pub n: usize,
    #[serde(default = "defaults::sm_m")]
    pub m: usize,
    #[serde(default = "defaults::sm_d")]
    pub d: usize,
    #[serde(default = "defaults::sm_noise")]
    pub noise: f64,
}

impl Default for SubspaceMeanSettings {
    fn default() -> Self {
        Self { n: defaults::sm_n(), m: defaults::sm_m(), d: defaults::sm_d(), noise: defaults::sm_noise() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
    #[serde(default = "defaults::dist_tol")]
    pub dist_tol: f64,
    #[serde(default = "defaults::cost_tol")]
    pub cost_tol: f64,
    #[serde(default)]
    pub audit_every: usize,
    #[serde(default = "defaults::audit_samples")]
    pub audit_samples: usize,
    #[serde(default = "defaults::directions")]
    pub stationarity_directions: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            max_iter: d.max_iter,
            dist_tol: d.dist_tol,
            cost_tol: d.cost_tol,
            audit_every: d.audit_every,
            audit_samples: d.audit_samples,
            stationarity_directions: d.stationarity_directions,
        }
    }
}

impl SolverSettings {
    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            max_iter: self.max_iter,
            dist_tol: self.dist_tol,
            cost_tol: self.cost_tol,
            audit_every: self.audit_every,
            audit_samples: self.audit_samples,
            seed,
            stationarity_directions: self.stationarity_directions,
        }
    }
}

mod defaults {
    use grassmm::mm::SolverConfig;

    pub fn deconv_n() -> usize {
        64
    }
    pub fn kernel_support() -> usize {
        8
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn sm_n() -> usize {
        10
    }
    pub fn sm_m() -> usize {
        40
    }
    pub fn sm_d() -> usize {
        2
    }
    pub fn sm_noise() -> f64 {
        0.3
    }
    pub fn max_iter() -> usize {
        SolverConfig::default().max_iter
    }
    pub fn dist_tol() -> f64 {
        SolverConfig::default().dist_tol
    }
    pub fn cost_tol() -> f64 {
        SolverConfig::default().cost_tol
    }
    pub fn audit_samples() -> usize {
        SolverConfig::default().audit_samples
    }
    pub fn directions() -> usize {
        SolverConfig::default().stationarity_directions
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.path.display(), line, self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of the first `"key":` in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    let mut from = 0;
    while let Some(pos) = text[from..].find(&quoted) {
        let at = from + pos;
        let rest = text[at + quoted.len()..].trim_start();
        if rest.starts_with(':') {
            return Some(text[..at].matches('\n').count() + 1);
        }
        from = at + quoted.len();
    }
    None
}

struct Checker<'a> {
    text: &'a str,
    path: &'a Path,
}

impl Checker<'_> {
    fn require(&self, ok: bool, field: &str, message: impl FnOnce() -> String) -> Result<(), ConfigError> {
        if ok {
            return Ok(());
        }
        let key = field.rsplit('.').next().unwrap_or(field);
        Err(ConfigError { path: self.path.to_path_buf(), line: line_of(self.text, key), message: format!("{field}: {}", message()) })
    }
}

/// Parses and validates a configuration. `path` is only used in messages.
pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: Some(e.line()),
        message: e.to_string(),
    })?;
    let c = Checker { text, path };
    c.require(!config.seeds.is_empty(), "seeds", || "at least one seed is required".into())?;
    let mut sorted = config.seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    c.require(sorted.len() == config.seeds.len(), "seeds", || "seeds must be distinct".into())?;
    match &config.problem {
        ProblemConfig::Deconv(d) => {
            c.require(d.n >= 2, "problem.n", || format!("must be at least 2, got {}", d.n))?;
            c.require((1..=d.n).contains(&d.kernel_support), "problem.kernel_support", || {
                format!("must lie in 1..={}, got {}", d.n, d.kernel_support)
            })?;
            c.require(d.sparsity.is_none() || d.spikes.is_none(), "problem.spikes", || {
                "give either sparsity or spikes, not both".into()
            })?;
            if let Some(s) = d.sparsity {
                c.require(s > 0.0 && s < 1.0, "problem.sparsity", || format!("must lie in (0, 1), got {s}"))?;
            }
            if let Some(k) = d.spikes {
                c.require((1..=d.n).contains(&k), "problem.spikes", || format!("must lie in 1..={}, got {k}", d.n))?;
            }
            c.require(d.noise_sigma >= 0.0 && d.noise_sigma.is_finite(), "problem.noise_sigma", || {
                format!("must be finite and >= 0, got {}", d.noise_sigma)
            })?;
            if let Some(l) = d.lambda {
                c.require(l >= 0.0 && l.is_finite(), "problem.lambda", || format!("must be finite and >= 0, got {l}"))?;
            }
            c.require(d.step_scale > 0.0 && d.step_scale.is_finite(), "problem.step_scale", || {
                format!("must be finite and > 0, got {}", d.step_scale)
            })?;
        }
        ProblemConfig::SubspaceMean(s) => {
            c.require(s.d >= 1 && s.d < s.n.min(s.m), "problem.d", || {
                format!("need 1 <= d < min(n, m) = {}, got {}", s.n.min(s.m), s.d)
            })?;
            c.require(s.noise >= 0.0 && s.noise.is_finite(), "problem.noise", || {
                format!("must be finite and >= 0, got {}", s.noise)
            })?;
        }
    }
    let s = &config.solver;
    c.require(s.max_iter >= 1, "solver.max_iter", || "must be at least 1".into())?;
    c.require(s.dist_tol > 0.0, "solver.dist_tol", || format!("must be > 0, got {}", s.dist_tol))?;
    c.require(s.cost_tol > 0.0, "solver.cost_tol", || format!("must be > 0, got {}", s.cost_tol))?;
    c.require(s.audit_samples >= 1, "solver.audit_samples", || "must be at least 1".into())?;
    c.require(s.stationarity_directions >= 1, "solver.stationarity_directions", || "must be at least 1".into())?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: None,
        message: format!("cannot read config: {e}"),
    })?;
    parse_config(&text, path)
}
