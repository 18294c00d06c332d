//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p grassmm-cli --test acceptance`.

use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use grassmm::deconv::{
    data_term, default_init, generate_instance, generate_spike_instance, grad_a, grad_x, random_init,
    recovery_score, solve_deconv, DeconvBlockProblem, DeconvProblem, DeconvState,
};
use grassmm::grassmann::{
    aligned_geodesic_at, build_aligned_spec, canonical_distance, exp_map, log_map, principal_angles,
    random_point, random_tangent, GrassmannPoint,
};
use grassmm::linalg::{derive_seed, gaussian_vector, random_orthonormal, thin_svd};
use grassmm::mm::{
    audit_derivative_match, audit_homogeneity, audit_majorization, audit_tightness, builtin_subspace_plus_mean,
    run_block_mm, subspace_mean_data, AuditConfig, AuditThresholds, Block, BlockProblem, Dims,
    FnProblem, FnSurrogate, Iterate, IterationTrace, SolverConfig, STATIONARITY_THRESHOLD,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

type Outcome = (bool, String);
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    (ok, detail.into())
}

// ---------------------------------------------------------------- geometry

fn geometry() -> Outcome {
    let start = Instant::now();
    let limit = std::f64::consts::FRAC_PI_2 - 0.1;
    let pairs = 200;
    let (mut exp_log, mut log_norm, mut forms, mut triangle) = (0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    let (mut asym, mut self_dist) = (0.0f64, 0.0f64);
    let mut identity_ok = true;
    let mut max_angle = 0.0f64;
    for k in 0..pairs {
        let seed = derive_seed(0xACCE, k);
        let x = random_point(seed, 8, 3).unwrap();
        // Tangent with prescribed spectral norm, sweeping the allowed range of
        // the largest principal angle.
        let unit = random_tangent(derive_seed(seed, 1), &x);
        let spectral = thin_svd(unit.delta()).unwrap().s.max();
        let target = 0.02 + (limit - 0.03) * (k as f64 + 0.5) / pairs as f64;
        let h = unit.scaled(target / spectral);
        let y = exp_map(&x, &h, 1.0).unwrap();
        let largest = principal_angles(&x, &y).unwrap().largest();
        max_angle = max_angle.max(largest);
        if largest >= limit {
            return check(false, format!("pair {k} has largest angle {largest}"));
        }

        let log = log_map(&x, &y).unwrap();
        let back = exp_map(&x, &log, 1.0).unwrap();
        exp_log = exp_log.max(canonical_distance(&back, &y).unwrap());
        let d = canonical_distance(&x, &y).unwrap();
        // Independent reference: the constructed tangent has length d_c.
        log_norm = log_norm.max((log.norm() - d).abs()).max((log.norm() - h.norm()).abs());

        let spec = build_aligned_spec(&x, &y).unwrap();
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let a = aligned_geodesic_at(&spec, t).unwrap();
            let b = exp_map(&x, &log, t).unwrap();
            forms = forms.max(projector_gap(&a, &b)).max(canonical_distance(&a, &b).unwrap());
        }

        let z = random_point(derive_seed(seed, 2), 8, 3).unwrap();
        let (dxy, dyx) = (canonical_distance(&x, &y).unwrap(), canonical_distance(&y, &x).unwrap());
        asym = asym.max((dxy - dyx).abs());
        let dxz = canonical_distance(&x, &z).unwrap();
        let dyz = canonical_distance(&y, &z).unwrap();
        triangle = triangle.max(dxz - dxy - dyz);

        let r = random_orthonormal(derive_seed(seed, 3), 3, 3).unwrap();
        let xr = x.rotated(&r).unwrap();
        let same = canonical_distance(&x, &xr).unwrap();
        self_dist = self_dist.max(same);
        let same_angles = principal_angles(&x, &xr).unwrap().as_slice().iter().all(|a| *a <= 1e-8);
        let apart_angles = principal_angles(&x, &y).unwrap().as_slice().iter().any(|a| *a > 1e-8);
        identity_ok &= same_angles && same <= 1e-8 && apart_angles && dxy > 0.0;
    }
    let elapsed = start.elapsed();
    let ok = exp_log <= 1e-8
        && log_norm <= 1e-8
        && forms <= 1e-7
        && asym == 0.0
        && identity_ok
        && triangle <= 1e-8
        && elapsed < Duration::from_secs(10);
    check(
        ok,
        format!(
            "{pairs} pairs, largest angle {max_angle:.3}; exp(log) {exp_log:.1e}, |log|-d_c {log_norm:.1e}, \
             two forms {forms:.1e}, asymmetry {asym:.1e}, d(X,XR) {self_dist:.1e}, triangle excess {triangle:.1e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn projector_gap(a: &GrassmannPoint, b: &GrassmannPoint) -> f64 {
    (a.basis() * a.basis().transpose() - b.basis() * b.basis().transpose()).norm()
}

// ------------------------------------------------------- solver runs (2-4)

struct DeconvRun {
    trace: IterationTrace,
    converged: bool,
    final_distance: f64,
    stationarity: f64,
}

struct SubspaceRun {
    trace: IterationTrace,
    converged: bool,
    final_distance: f64,
    stationarity: f64,
    final_cost: f64,
    oracle: f64,
}

struct Runs {
    deconv: Vec<DeconvRun>,
    subspace: Vec<SubspaceRun>,
    elapsed: Duration,
}

fn solver_runs() -> Runs {
    let start = Instant::now();
    let deconv = (0..100u64)
        .map(|seed| {
            let inst = generate_spike_instance(seed, 64, 4, 8, 0.0).unwrap();
            let p = DeconvProblem::new(inst.y.clone(), 0.1).unwrap();
            let init = default_init(&inst.y, 8).unwrap();
            let cfg = SolverConfig { seed, ..SolverConfig::default() };
            let (trace, report) = solve_deconv(&p, &init, &cfg).unwrap();
            DeconvRun {
                trace,
                converged: report.converged,
                final_distance: report.final_distance,
                stationarity: report.stationarity.score,
            }
        })
        .collect();
    let subspace = (0..50u64)
        .map(|seed| {
            let a = subspace_mean_data(seed, 10, 40, 2, 0.3);
            let oracle = svd_oracle(&a, 2);
            let p = builtin_subspace_plus_mean(a, 2).unwrap();
            let init = p.random_init(derive_seed(seed, 1));
            let cfg = SolverConfig { seed, ..SolverConfig::default() };
            let (trace, report) = run_block_mm(&p, init.g, init.c, &cfg).unwrap();
            SubspaceRun {
                trace,
                converged: report.converged,
                final_distance: report.final_distance,
                stationarity: report.stationarity.score,
                final_cost: report.final_cost,
                oracle,
            }
        })
        .collect();
    Runs { deconv, subspace, elapsed: start.elapsed() }
}

/// Tail energy of the centred data from nalgebra's SVD.
fn svd_oracle(a: &DMatrix<f64>, d: usize) -> f64 {
    let mean = a.column_mean();
    let mut b = a.clone();
    for mut col in b.column_iter_mut() {
        col -= &mean;
    }
    let mut s: Vec<f64> = b.svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|p, q| q.total_cmp(p));
    s.iter().skip(d).map(|v| v * v).sum()
}

fn largest_step_increase(trace: &IterationTrace) -> f64 {
    trace.records.windows(2).map(|w| w[1].f - w[0].f).fold(f64::NEG_INFINITY, f64::max)
}

fn descent(runs: &Runs) -> Outcome {
    let traces = runs.deconv.iter().map(|r| &r.trace).chain(runs.subspace.iter().map(|r| &r.trace));
    let worst = traces.clone().map(largest_step_increase).fold(f64::NEG_INFINITY, f64::max);
    // Also within each iteration: f(G_i, c_i) >= f(G_{i+1}, c_i) >= f(G_{i+1}, c_{i+1}).
    let chains = traces.filter(|t| t.descent_chain_holds(1e-10)).count();
    let ok = worst <= 1e-10 && chains == 150 && runs.elapsed < Duration::from_secs(60);
    check(
        ok,
        format!(
            "100 deconv + 50 subspace-mean traces, largest per-step increase {worst:.2e}, block chain holds in {chains}/150, {:.1}s",
            runs.elapsed.as_secs_f64()
        ),
    )
}

fn convergence(runs: &Runs) -> Outcome {
    let done = |converged: bool, dist: f64| converged && dist < 1e-6;
    let deconv = runs.deconv.iter().filter(|r| done(r.converged, r.final_distance)).count();
    let subspace = runs.subspace.iter().filter(|r| done(r.converged, r.final_distance)).count();
    let stationarity = runs
        .deconv
        .iter()
        .filter(|r| r.converged)
        .map(|r| r.stationarity)
        .chain(runs.subspace.iter().filter(|r| r.converged).map(|r| r.stationarity))
        .fold(f64::INFINITY, f64::min);
    let ok = deconv >= 90 && subspace == 50 && stationarity >= STATIONARITY_THRESHOLD;
    check(
        ok,
        format!("deconv {deconv}/100, subspace-mean {subspace}/50 converged; lowest stationarity score {stationarity:.2e}"),
    )
}

fn oracle(runs: &Runs) -> Outcome {
    let worst = runs.subspace.iter().map(|r| (r.final_cost - r.oracle).abs()).fold(0.0, f64::max);
    check(worst <= 1e-8, format!("50 instances, largest gap to SVD oracle {worst:.2e}"))
}

// ------------------------------------------------------------------ audits

fn audit_config() -> AuditConfig {
    AuditConfig {
        samples: 200,
        thresholds: AuditThresholds { tightness: 1e-10, majorization: 1e-9, derivative_rel: 1e-4, homogeneity: 1e-9, ..AuditThresholds::default() },
        ..AuditConfig::default()
    }
}

/// Random kernels with dense signals: away from the kinks of the l1 term.
fn dense_anchors(seed: u64, count: u64) -> Vec<Iterate> {
    (0..count)
        .map(|k| {
            let s = derive_seed(seed, k);
            Iterate::new(random_init(s, 64).a, gaussian_vector(derive_seed(s, 1), 64))
        })
        .collect()
}

fn deconv_block_problem(seed: u64, step_scale: f64) -> DeconvBlockProblem {
    let inst = generate_spike_instance(seed, 64, 4, 8, 0.0).unwrap();
    DeconvBlockProblem::with_step_scale(DeconvProblem::new(inst.y, 0.1).unwrap(), step_scale).unwrap()
}

/// Deconv problem whose kernel surrogate is altered by `extra(candidate, anchor)`.
fn perturbed(
    inner: Arc<DeconvBlockProblem>,
    extra: impl Fn(&GrassmannPoint, &Iterate) -> f64 + Send + Sync + 'static,
) -> FnProblem {
    let (cost, sg, mg, sc, mc) = (inner.clone(), inner.clone(), inner.clone(), inner.clone(), inner);
    FnProblem::new(
        Dims { n: 64, d: 1, convex_len: 64 },
        move |g, c| cost.cost(g, c),
        FnSurrogate::new(
            move |g, a| sg.grassmann_surrogate().evaluate(g, a) + extra(g, a),
            move |a: &Iterate| mg.grassmann_surrogate().minimize(a),
        ),
        FnSurrogate::new(
            move |c, a| sc.convex_surrogate().evaluate(c, a),
            move |a: &Iterate| mc.convex_surrogate().minimize(a),
        ),
    )
}

fn surrogate_audits() -> Outcome {
    let cfg = audit_config();
    let mut tight = 0.0f64;
    let mut margin = f64::INFINITY;
    let mut deriv = 0.0f64;
    let mut homog = 0.0f64;
    let (mut majorization_samples, mut deriv_checked, mut deriv_skipped) = (0, 0, 0);
    let mut positives_ok = true;
    for seed in 0..5u64 {
        let p = deconv_block_problem(seed, 1.0);
        let mut anchors = dense_anchors(derive_seed(seed, 77), 4);
        let inst = generate_spike_instance(seed, 64, 4, 8, 0.0).unwrap();
        let start = default_init(&inst.y, 8).unwrap();
        let (_, report) = solve_deconv(p.problem(), &start, &SolverConfig::default()).unwrap();
        let dense = anchors.clone();
        anchors.push(Iterate::new(start.a, start.x));
        anchors.push(report.final_iterate);
        for block in [Block::Grassmann, Block::Convex] {
            let t = audit_tightness(&p, block, &anchors, &cfg);
            let m = audit_majorization(&p, block, &anchors, cfg.samples, derive_seed(seed, 1), &cfg);
            tight = tight.max(t.worst);
            margin = margin.min(m.worst);
            majorization_samples += m.checked;
            positives_ok &= t.passed && m.passed;
            for (k, a) in dense.iter().enumerate() {
                let d = audit_derivative_match(&p, block, a, cfg.directions, derive_seed(seed, 10 + k as u64), &cfg);
                deriv = deriv.max(d.worst);
                deriv_checked += d.checked;
                deriv_skipped += d.skipped;
                positives_ok &= d.passed;
            }
        }
        let h = audit_homogeneity(&p, &anchors, 10, derive_seed(seed, 2), &cfg);
        homog = homog.max(h.worst);
        positives_ok &= h.passed;
    }
    positives_ok &= tight <= 1e-10 && margin >= -1e-9 && deriv <= 1e-4 && homog <= 1e-9;

    let controls = negative_controls(&cfg);
    let controls_ok = controls.iter().all(|(_, failed)| *failed);
    let names: Vec<String> = controls
        .iter()
        .map(|(name, failed)| format!("{name} {}", if *failed { "fails" } else { "PASSES" }))
        .collect();
    check(
        positives_ok && controls_ok,
        format!(
            "tightness {tight:.1e}, majorization margin {margin:.1e} ({majorization_samples} samples), \
             derivative {deriv:.1e} ({deriv_checked} checked, {deriv_skipped} skipped at kinks), homogeneity {homog:.1e}; \
             controls: {}",
            names.join(", ")
        ),
    )
}

fn negative_controls(cfg: &AuditConfig) -> Vec<(&'static str, bool)> {
    let inner = Arc::new(deconv_block_problem(11, 1.0));
    let anchors = dense_anchors(99, 4);

    let offset = perturbed(inner.clone(), |_, _| 1.0);
    let t = audit_tightness(&offset, Block::Grassmann, &anchors, cfg);
    let offset_fails = !t.passed && (t.worst - 1.0).abs() <= 1e-9;

    let long = deconv_block_problem(11, 10.0);
    let long_fails = [Block::Grassmann, Block::Convex]
        .iter()
        .all(|&b| !audit_majorization(&long, b, &anchors, cfg.samples, 3, cfg).passed);

    let dir = gaussian_vector(5, 64);
    let linear = perturbed(inner, move |g, a| (g.column_vector() - a.g.column_vector()).dot(&dir));
    let linear_fails = anchors
        .iter()
        .enumerate()
        .all(|(k, a)| !audit_derivative_match(&linear, Block::Grassmann, a, cfg.directions, k as u64, cfg).passed);

    let trace_cost = |g: &GrassmannPoint, _: &DVector<f64>| g.basis()[(0, 0)];
    let trace = FnProblem::new(
        Dims { n: 64, d: 1, convex_len: 64 },
        trace_cost,
        FnSurrogate::new(move |g, a| trace_cost(g, &a.c), |a: &Iterate| Ok(a.g.clone())),
        FnSurrogate::new(move |_, a| trace_cost(&a.g, &a.c), |a: &Iterate| Ok(a.c.clone())),
    );
    let trace_fails = !audit_homogeneity(&trace, &anchors, 10, 4, cfg).passed;

    vec![
        ("offset g = f + 1", offset_fails),
        ("step 10/L", long_fails),
        ("linear term", linear_fails),
        ("tr(G) cost", trace_fails),
    ]
}

// ---------------------------------------------------------------- recovery

fn recovery() -> Outcome {
    let lambda = 1e-4;
    let mut scores: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let inst = generate_instance(seed, 64, 0.05, 8, 0.0).unwrap();
            let p = DeconvProblem::new(inst.y.clone(), lambda).unwrap();
            let init = default_init(&inst.y, 8).unwrap();
            let (_, report) = solve_deconv(&p, &init, &SolverConfig { seed, ..SolverConfig::default() }).unwrap();
            let state = DeconvState::from_point(report.final_iterate.g, report.final_iterate.c).unwrap();
            recovery_score(&state, &inst).unwrap()
        })
        .collect();
    let good = scores.iter().filter(|s| **s >= 0.95).count();
    scores.sort_by(f64::total_cmp);
    check(
        good >= 60,
        format!("lambda {lambda:e}: {good}/100 seeds with score >= 0.95, median score {:.3}", scores[50]),
    )
}

// ------------------------------------------------------------- determinism

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(&config, r#"{"problem": {"kind": "deconv", "spikes": 4, "lambda": 0.1}, "seeds": [1, 2, 3, 4]}"#).unwrap();
    for out in ["a", "b"] {
        let status = Command::new(env!("CARGO_BIN_EXE_grassmm"))
            .arg("--out")
            .arg(dir.path().join(out))
            .arg("run")
            .arg(&config)
            .output()
            .unwrap()
            .status;
        if !status.success() {
            return check(false, format!("run exited with {status}"));
        }
    }
    let mut bytes = 0;
    for seed in 1..=4 {
        let name = format!("trace_seed{seed}.csv");
        let a = std::fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(&name)).unwrap();
        if a != b {
            return check(false, format!("{name} differs between runs"));
        }
        bytes += a.len();
    }
    check(true, format!("4 traces ({bytes} bytes) identical across two runs"))
}

// --------------------------------------------------------------- gradients

fn central_difference(f: impl Fn(&DVector<f64>) -> f64, at: &DVector<f64>) -> DVector<f64> {
    let h = 1e-6;
    DVector::from_fn(at.len(), |i, _| {
        let (mut p, mut m) = (at.clone(), at.clone());
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

fn gradients() -> Outcome {
    let (mut rel_x, mut rel_a) = (0.0f64, 0.0f64);
    for k in 0..50u64 {
        let s = derive_seed(0x6EAD, k);
        let n = 16 + (k as usize % 5) * 12;
        let p = DeconvProblem::new(gaussian_vector(s, n), 0.1).unwrap();
        let a = gaussian_vector(derive_seed(s, 1), n).normalize();
        let x = gaussian_vector(derive_seed(s, 2), n);
        let gx = grad_x(&p, &a, &x).unwrap();
        let fd = central_difference(|z| data_term(&p, &a, z).unwrap(), &x);
        rel_x = rel_x.max((&fd - &gx).norm() / gx.norm());
        let ga = grad_a(&p, &a, &x).unwrap();
        let fd = central_difference(|z| data_term(&p, z, &x).unwrap(), &a);
        rel_a = rel_a.max((&fd - &ga).norm() / ga.norm());
    }
    check(
        rel_x <= 1e-6 && rel_a <= 1e-6,
        format!("50 states each, worst relative error grad_x {rel_x:.1e}, grad_a {rel_a:.1e}"),
    )
}

fn main() -> ExitCode {
    let runs = solver_runs();
    let criteria: Vec<Criterion> = vec![
        ("1 geometry", Box::new(geometry)),
        ("2 descent", Box::new(|| descent(&runs))),
        ("3 convergence", Box::new(|| convergence(&runs))),
        ("4 oracle equivalence", Box::new(|| oracle(&runs))),
        ("5 surrogate audits", Box::new(surrogate_audits)),
        ("6 kernel recovery", Box::new(recovery)),
        ("7 determinism", Box::new(determinism)),
        ("8 gradient checks", Box::new(gradients)),
    ];
    let mut failures = 0;
    for (name, run) in &criteria {
        let start = Instant::now();
        let (ok, detail) = run();
        let detail = format!("{detail} [{:.1}s]", start.elapsed().as_secs_f64());
        failures += usize::from(!ok);
        println!("{} [{name}] {detail}", if ok { "PASS" } else { "FAIL" });
    }
    println!("{}/{} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
