//! Command-line experiments for `grassmm`.
//!
//! Exit codes: 0 success, 1 usage or runtime error, 2 some seed hit
//! `max_iter` without converging, 3 some surrogate audit failed.

pub mod config;
pub mod experiment;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use config::{load_config, DeconvSettings, ExperimentConfig, ProblemConfig, SolverSettings, SubspaceMeanSettings};
use experiment::{audit_seed, build, run_seed, Extra};
use output::{
    output_dir, summarize, trace_file_name, write_json, write_trace, AuditEntry, AuditReport, Report,
    RunEntry, SeedAudits, AUDIT_FILE, REPORT_FILE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_AUDIT_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "grassmm", version, about = "Block MM experiments with a Grassmann block")]
struct Cli {
    /// Directory for traces and reports (overrides the config's `output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve every configured seed and write traces plus report.json.
    Run { config: PathBuf },
    /// Audit the surrogates of the configured problem and write audit.json.
    Audit { config: PathBuf },
    /// Solve one canned instance and print a short summary.
    Demo {
        kind: DemoKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DemoKind {
    Deconv,
    SubspaceMean,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config, cli.out.as_deref(), out),
        Command::Audit { config } => cmd_audit(config, cli.out.as_deref(), out),
        Command::Demo { kind, seed } => cmd_demo(*kind, *seed, cli.out.as_deref(), out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn prepare(config_path: &Path, out_flag: Option<&Path>) -> Result<(ExperimentConfig, PathBuf)> {
    let config = load_config(config_path)?;
    let dir = output_dir(out_flag, &config);
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok((config, dir))
}

fn cmd_run(config_path: &Path, out_flag: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let (config, dir) = prepare(config_path, out_flag)?;
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let built = build(&config.problem, seed)?;
            let run = run_seed(&built, seed, &config.solver.solver_config(seed))
                .map_err(|e| anyhow!("seed {seed}: {e}"))?;
            write_trace(&dir.join(trace_file_name(seed)), &run.trace)?;
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;

    let entries: Vec<RunEntry> = runs.iter().map(RunEntry::new).collect();
    let all_converged = entries.iter().all(|e| e.converged);
    for e in &entries {
        writeln!(
            out,
            "seed {}: {} after {} iterations, f = {:.6e}, d_c = {:.3e}, stationarity = {:.3e}",
            e.seed,
            if e.converged { "converged" } else { "not converged" },
            e.iterations,
            e.final_f,
            e.final_dc,
            e.stationarity_score
        )?;
    }
    let report = Report { kind: config.problem.kind(), all_converged, config: &config, runs: entries };
    write_json(&dir.join(REPORT_FILE), &report)?;
    Ok(if all_converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_audit(config_path: &Path, out_flag: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let (config, dir) = prepare(config_path, out_flag)?;
    let seeds = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let built = build(&config.problem, seed)?;
            // Quasiconvexity is sampled around the solver's end point; a
            // broken surrogate can stop the solver, in which case the start
            // point is used.
            let (anchor, solver_error) = match run_seed(&built, seed, &config.solver.solver_config(seed)) {
                Ok(run) => (run.report.final_iterate, None),
                Err(e) => (built.init().clone(), Some(e.to_string())),
            };
            let audits = audit_seed(&built, &anchor, seed, config.solver.audit_samples.max(200));
            Ok(SeedAudits { seed, solver_error, audits: audits.iter().map(AuditEntry::from).collect() })
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = summarize(&seeds);
    let all_passed = summary.iter().all(|e| e.passed);
    for e in &summary {
        writeln!(
            out,
            "{:<12} {:<17} {:<10} {} worst = {:.3e} (threshold {:.0e}, {} checked, {} skipped)",
            e.assumption,
            e.name,
            e.block.as_deref().unwrap_or("-"),
            if e.passed { "PASS" } else { "FAIL" },
            e.worst,
            e.threshold,
            e.checked,
            e.skipped
        )?;
    }
    let report = AuditReport { kind: config.problem.kind(), all_passed, summary, config: &config, seeds };
    write_json(&dir.join(AUDIT_FILE), &report)?;
    Ok(if all_passed { EXIT_OK } else { EXIT_AUDIT_FAILED })
}

fn cmd_demo(kind: DemoKind, seed: u64, out_flag: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let problem = match kind {
        DemoKind::Deconv => ProblemConfig::Deconv(DeconvSettings::default()),
        DemoKind::SubspaceMean => ProblemConfig::SubspaceMean(SubspaceMeanSettings::default()),
    };
    let solver = SolverSettings::default();
    let built = build(&problem, seed)?;
    let run = run_seed(&built, seed, &solver.solver_config(seed))?;
    let r = &run.report;

    let header = match &problem {
        ProblemConfig::Deconv(d) => format!(
            "deconv demo, seed {seed}: N = {}, kernel support {}, sparsity {}",
            d.n,
            d.kernel_support,
            DeconvSettings::DEFAULT_SPARSITY
        ),
        ProblemConfig::SubspaceMean(s) => {
            format!("subspace-mean demo, seed {seed}: {}x{} data, D = {}, noise {}", s.n, s.m, s.d, s.noise)
        }
    };
    writeln!(out, "{header}")?;
    writeln!(out, "final cost: {:.12e}", r.final_cost)?;
    writeln!(out, "iterations: {} ({})", r.iterations, if r.converged { "converged" } else { "not converged" })?;
    writeln!(out, "final d_c step: {:.3e}", r.final_distance)?;
    writeln!(
        out,
        "stationarity score: {:.3e} over {} directions ({})",
        r.stationarity.score,
        r.stationarity.directions,
        if r.stationarity.is_stationary() { "stationary" } else { "not stationary" }
    )?;
    match run.extra {
        Extra::Deconv { lambda, recovery_score } => {
            writeln!(out, "recovery score: {recovery_score:.4} (lambda = {lambda:.4e})")?
        }
        Extra::SubspaceMean { oracle_cost } => writeln!(
            out,
            "oracle cost: {oracle_cost:.12e} (gap {:.1e})",
            (r.final_cost - oracle_cost).abs()
        )?,
    }

    if let Some(dir) = out_flag {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write_trace(&dir.join(trace_file_name(seed)), &run.trace)?;
    }
    Ok(EXIT_OK)
}
