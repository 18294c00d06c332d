//! Trace CSVs, `report.json` and `audit.json`.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use grassmm::mm::{AuditKind, AuditResult, IterationTrace};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiment::{Extra, SeedRun};

pub const TRACE_HEADER: [&str; 6] = ["iter", "f", "f_after_G", "dc_step", "grad_norm_G", "grad_norm_c"];
pub const REPORT_FILE: &str = "report.json";
pub const AUDIT_FILE: &str = "audit.json";

pub fn trace_file_name(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

/// 17 significant digits, enough to round-trip any f64.
fn full(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trace(path: &Path, trace: &IterationTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(TRACE_HEADER)?;
    for r in &trace.records {
        w.write_record([
            r.iter.to_string(),
            full(r.f),
            full(r.f_after_g),
            full(r.dc_step),
            full(r.grad_norm_g),
            full(r.grad_norm_c),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunEntry {
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub final_f: f64,
    pub final_dc: f64,
    pub stationarity_score: f64,
    pub stationarity_directions: usize,
    pub stationarity_seed: u64,
    pub stationarity_step: f64,
    #[serde(rename = "final_grad_norm_G")]
    pub final_grad_norm_g: f64,
    pub final_grad_norm_c: f64,
    pub oscillation_suspected: bool,
    pub audit_runs: usize,
    pub audit_failures: usize,
    pub trace_file: String,
    #[serde(flatten)]
    pub extra: Extra,
}

impl RunEntry {
    pub fn new(run: &SeedRun) -> Self {
        let r = &run.report;
        Self {
            seed: run.seed,
            converged: r.converged,
            iterations: r.iterations,
            final_f: r.final_cost,
            final_dc: r.final_distance,
            stationarity_score: r.stationarity.score,
            stationarity_directions: r.stationarity.directions,
            stationarity_seed: r.stationarity.seed,
            stationarity_step: r.stationarity.step,
            final_grad_norm_g: r.final_grad_norm_g,
            final_grad_norm_c: r.final_grad_norm_c,
            oscillation_suspected: r.oscillation_suspected,
            audit_runs: r.audits.runs,
            audit_failures: r.audits.failures,
            trace_file: trace_file_name(run.seed),
            extra: run.extra,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub kind: &'static str,
    pub all_converged: bool,
    pub config: &'a ExperimentConfig,
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AuditEntry {
    pub assumption: &'static str,
    pub name: &'static str,
    pub block: Option<String>,
    pub passed: bool,
    /// Minimum margin for majorization, maximum deviation otherwise.
    pub worst: f64,
    pub threshold: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl From<&AuditResult> for AuditEntry {
    fn from(r: &AuditResult) -> Self {
        Self {
            assumption: r.kind.assumption(),
            name: r.kind.name(),
            block: r.block.map(|b| b.to_string()),
            passed: r.passed,
            worst: r.worst,
            threshold: r.threshold,
            checked: r.checked,
            skipped: r.skipped,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SeedAudits {
    pub seed: u64,
    /// Solver error at this seed, if the run used to place the local anchor failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver_error: Option<String>,
    pub audits: Vec<AuditEntry>,
}

#[derive(Debug, Serialize)]
pub struct AuditReport<'a> {
    pub kind: &'static str,
    pub all_passed: bool,
    /// Worst value of each audit over all seeds.
    pub summary: Vec<AuditEntry>,
    pub config: &'a ExperimentConfig,
    pub seeds: Vec<SeedAudits>,
}

/// Folds per-seed entries (same order per seed) into one entry per audit.
pub fn summarize(seeds: &[SeedAudits]) -> Vec<AuditEntry> {
    let Some(first) = seeds.first() else { return Vec::new() };
    let mut out = first.audits.clone();
    for s in &seeds[1..] {
        for (acc, e) in out.iter_mut().zip(&s.audits) {
            acc.worst = if acc.name == AuditKind::Majorization.name() {
                acc.worst.min(e.worst)
            } else {
                acc.worst.max(e.worst)
            };
            acc.passed &= e.passed;
            acc.checked += e.checked;
            acc.skipped += e.skipped;
        }
    }
    out
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

pub fn output_dir(cli: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}
