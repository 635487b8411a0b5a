use polyharm_core::calculus::{amn_constant, iterated_laplacian_fd};
use polyharm_core::geometry::{integrate, norm, sphere_rule};
use polyharm_core::growth::{theorem1_criterion, theorem2_criterion, GrowthReport, LittleO};
use polyharm_core::kernel::{volume_potential, KernelContext};
use polyharm_core::navier::{extract_traces, interior_samples, navier_solve, residuals, ResidualReport};
use polyharm_core::removability::{
    corpus, fundamental_solution, remove_singularity, Decision, RemovabilityVerdict, Theorem,
    PIPELINE_RADIUS,
};
use polyharm_core::{ExprField, FieldExpr, FieldMeta, FnField, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{corpus_entry, RunConfig};
use crate::error::*;
use crate::output::*;

fn decision_code(d: Decision) -> u8 {
    match d {
        Decision::Removable => EXIT_OK,
        Decision::NotRemovable => EXIT_NOT_REMOVABLE,
        Decision::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn pass_code(passed: bool) -> u8 {
    if passed {
        EXIT_OK
    } else {
        EXIT_INCONCLUSIVE
    }
}

fn axis_point(n: usize, r: f64) -> Vec<f64> {
    let mut x = vec![0.0; n];
    x[0] = r;
    x
}

/// `gamma`, a corpus name (evaluated in dimension n), or a field spec.
pub fn resolve_field(cfg: &RunConfig) -> Result<ExprField, CliError> {
    let name = cfg.require_field()?;
    if name == "gamma" {
        return Ok(fundamental_solution(cfg.m, cfg.n)?);
    }
    let spec = corpus_entry(name).map_or(name, |e| e.spec);
    Ok(FieldExpr::parse(spec, cfg.n)?.into_field(cfg.m, PIPELINE_RADIUS))
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    measured: f64,
    reference: f64,
    tolerance: f64,
    passed: bool,
}

impl Check {
    fn near(name: &'static str, measured: f64, reference: f64, tolerance: f64) -> Self {
        Check {
            name,
            measured,
            reference,
            tolerance,
            passed: (measured - reference).abs() <= tolerance,
        }
    }
}

#[derive(Serialize)]
struct KernelSuite {
    n: usize,
    checks: Vec<Check>,
    passed: bool,
}

fn random_ball_point(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-radius..radius)).collect();
        if norm(&x) < radius {
            return x;
        }
    }
}

pub fn kernels(cfg: &RunConfig) -> Result<u8, CliError> {
    let n = cfg.n;
    let ctx = KernelContext::new(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut asym, mut min_g, mut boundary) = (0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..100 {
        let x = random_ball_point(&mut rng, n, 0.95);
        let y = random_ball_point(&mut rng, n, 0.95);
        let a = ctx.green(&x, &y)?;
        let b = ctx.green(&y, &x)?;
        asym = asym.max((a - b).abs() / a.abs().max(1.0));
        min_g = min_g.min(a.min(b));
        let mut s = random_ball_point(&mut rng, n, 1.0);
        let len = norm(&s);
        s.iter_mut().for_each(|v| *v /= len);
        boundary = boundary.max(ctx.green(&s, &x)?.abs());
    }
    // The kernel peaks more sharply with n, so the probe rule refines with it.
    let rule = sphere_rule(n, cfg.level + 4 + 2 * n.saturating_sub(3))?;
    let mut poisson = 0.0f64;
    for r in [0.0, 0.3, 0.6] {
        let x = axis_point(n, r);
        let s = integrate(&rule, |y| ctx.poisson(&x, y).unwrap_or(f64::NAN))?;
        poisson = poisson.max((s - 1.0).abs());
    }
    let one = FnField::new(FieldMeta::smooth(n, 1, 1.0), |_| 1.0);
    let mut c1 = 0.0f64;
    for r in [0.0, 0.2, 0.4] {
        c1 = c1.max(-volume_potential(&ctx, &one, &axis_point(n, r), cfg.level + 2)?);
    }
    let checks = vec![
        Check::near("green_symmetry", asym, 0.0, 1e-12),
        Check {
            name: "green_positive",
            measured: min_g,
            reference: 0.0,
            tolerance: 0.0,
            passed: min_g > 0.0,
        },
        Check::near("green_boundary_vanish", boundary, 0.0, 1e-12),
        Check::near("poisson_normalization", 1.0 + poisson, 1.0, 1e-6),
        Check::near("c1", c1, ctx.c1(), 1e-4),
    ];
    let passed = checks.iter().all(|c| c.passed);
    println!("{:<24} {:>14} {:>14} {:>10}  status", "check", "measured", "reference", "tol");
    for c in &checks {
        println!(
            "{:<24} {:>14.6e} {:>14.6e} {:>10.1e}  {}",
            c.name,
            c.measured,
            c.reference,
            c.tolerance,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    let suite = KernelSuite { n, checks, passed };
    if let Some(dir) = &cfg.out {
        write_json(dir, "verdict.json", cfg, &suite)?;
        write_csv(dir, "kernels.csv", &["name", "measured", "reference", "tolerance", "passed"], &suite.checks)?;
    }
    Ok(if passed { EXIT_OK } else { EXIT_SUITE_FAILED })
}

#[derive(Serialize)]
struct FundamentalRow {
    r: f64,
    measured: f64,
    expected: f64,
    relative_error: f64,
}

#[derive(Serialize)]
struct FundamentalReport {
    m: usize,
    n: usize,
    constant: f64,
    rows: Vec<FundamentalRow>,
    passed: bool,
}

pub fn fundamental(cfg: &RunConfig) -> Result<u8, CliError> {
    let (m, n) = (cfg.m, cfg.n);
    let a = amn_constant(m, n)?;
    let g = fundamental_solution(m, n)?;
    let mut rows = Vec::new();
    for r in [0.3, 0.5, 0.7] {
        let measured = iterated_laplacian_fd(&g, &axis_point(n, r), m - 1, cfg.fd_step)?;
        let expected = a * r.powi(2 - n as i32);
        rows.push(FundamentalRow {
            r,
            measured,
            expected,
            relative_error: ((measured - expected) / expected).abs(),
        });
    }
    let passed = rows.iter().all(|r| r.relative_error <= 1e-3);
    println!("A(m={m}, n={n}) = {a}");
    for r in &rows {
        println!(
            "|x| = {:.2}: measured {:.6} expected {:.6} rel {:.2e}",
            r.r, r.measured, r.expected, r.relative_error
        );
    }
    let report = FundamentalReport { m, n, constant: a, rows, passed };
    if let Some(dir) = &cfg.out {
        write_json(dir, "verdict.json", cfg, &report)?;
        write_csv(dir, "fundamental.csv", &["r", "measured", "expected", "relative_error"], &report.rows)?;
    }
    Ok(pass_code(passed))
}

fn residual_rows(rep: &ResidualReport, exact: &[Option<f64>]) -> Vec<ResidualRow> {
    let m = rep.residuals.len();
    (0..m)
        .map(|j| ResidualRow {
            i: j + 1,
            k: m - j - 1,
            residual: rep.residuals[j],
            exact_error: exact.get(j).copied().flatten(),
            argmax: join_point(&rep.argmax[j]),
        })
        .collect()
}

#[derive(Serialize)]
struct NavierReport {
    fit_degree: u32,
    bound_chain: Vec<f64>,
    residuals: Vec<f64>,
    exact_errors: Vec<Option<f64>>,
    relative_residual: f64,
    extension_at_origin: f64,
    passed: bool,
}

pub fn navier(cfg: &RunConfig) -> Result<u8, CliError> {
    let u = resolve_field(cfg)?;
    let traces = extract_traces(&u, cfg.m, cfg.level, cfg.fd_step)?;
    let sol = navier_solve(&traces)?;
    let samples = interior_samples(cfg.n, cfg.samples)?;
    let rep = residuals(&u, &sol, &samples, cfg.fd_step)?;
    let expr = u.expr();
    let origin = vec![0.0; cfg.n];
    let exact_errors: Vec<Option<f64>> = (1..=cfg.m)
        .map(|i| {
            expr.is_smooth().then(|| {
                let exact = expr.iterated_laplacian(cfg.m - i);
                let v = sol.field(i);
                samples
                    .iter()
                    .chain(std::iter::once(&origin))
                    .map(|x| (v.eval(x) - exact.eval(x)).abs())
                    .fold(0.0, f64::max)
            })
        })
        .collect();
    let scale = traces.scale();
    let relative = if scale > 0.0 { rep.max() / scale } else { rep.max() };
    let report = NavierReport {
        fit_degree: sol.fit_degree(),
        bound_chain: sol.bound_chain().to_vec(),
        residuals: rep.residuals.clone(),
        exact_errors: exact_errors.clone(),
        relative_residual: relative,
        extension_at_origin: sol.extension().eval(&origin),
        passed: relative <= cfg.tol,
    };
    for (j, r) in report.residuals.iter().enumerate() {
        let exact = exact_errors[j].map_or("n/a".to_string(), |e| format!("{e:.3e}"));
        println!(
            "v_{}: residual {r:.3e}, exact error {exact}, bound {:.6}",
            j + 1,
            report.bound_chain[j]
        );
    }
    println!("relative residual {relative:.3e} (tol {:.1e})", cfg.tol);
    println!("v_m(0) = {:.6e}", report.extension_at_origin);
    if let Some(dir) = &cfg.out {
        write_json(dir, "verdict.json", cfg, &report)?;
        write_csv(dir, "residuals.csv", &RESIDUAL_HEADER, &residual_rows(&rep, &exact_errors))?;
    }
    Ok(pass_code(report.passed))
}

#[derive(Serialize)]
struct ClassifyReport<'a> {
    theorem: Theorem,
    outcome: LittleO,
    decision: Decision,
    reports: &'a [GrowthReport],
}

pub fn classify(cfg: &RunConfig) -> Result<u8, CliError> {
    let u = resolve_field(cfg)?;
    let profile = cfg.profile();
    let (reports, outcome) = match cfg.theorem {
        Theorem::T1 => theorem1_criterion(&u, &profile)?,
        Theorem::T2 => {
            let (r, o) = theorem2_criterion(&u, &profile)?;
            (vec![r], o)
        }
    };
    let decision = match outcome {
        LittleO::Holds => Decision::Removable,
        LittleO::Fails => Decision::NotRemovable,
        LittleO::Undecided => Decision::Inconclusive,
    };
    for r in &reports {
        println!(
            "k={}: exponent {} log={} outcome {:?}",
            r.k, r.exponent.0, r.log_flag, r.outcome
        );
    }
    println!("decision: {decision}");
    if let Some(dir) = &cfg.out {
        let report = ClassifyReport {
            theorem: cfg.theorem,
            outcome,
            decision,
            reports: &reports,
        };
        write_json(dir, "verdict.json", cfg, &report)?;
        write_csv(dir, "profile.csv", &PROFILE_HEADER, &profile_rows(&reports))?;
    }
    Ok(decision_code(decision))
}

#[derive(Serialize)]
struct RemoveReport<'a> {
    verdict: &'a RemovabilityVerdict,
    extension_at_origin: Option<f64>,
}

pub fn remove(cfg: &RunConfig) -> Result<u8, CliError> {
    let u = resolve_field(cfg)?;
    let res = remove_singularity(&u, &cfg.pipeline())?;
    let origin = vec![0.0; cfg.n];
    let at_origin = res.extension.as_ref().map(|e| e.eval(&origin));
    let v = &res.verdict;
    println!("decision: {}", v.decision);
    if let Some(r) = v.relative_residual {
        println!("relative residual {r:.3e} (tol {:.1e})", cfg.tol);
    }
    if let Some(x) = at_origin {
        println!("extension(0) = {x:.6e}");
    }
    for d in &v.diagnostics {
        println!("note: {d}");
    }
    if let Some(dir) = &cfg.out {
        let report = RemoveReport {
            verdict: v,
            extension_at_origin: at_origin,
        };
        write_json(dir, "verdict.json", cfg, &report)?;
        write_csv(dir, "profile.csv", &PROFILE_HEADER, &profile_rows(&v.per_k_reports))?;
        let rep = ResidualReport {
            residuals: res.residuals.clone(),
            argmax: res.residual_argmax.clone(),
        };
        let rows = residual_rows(&rep, &[]);
        write_csv(dir, "residuals.csv", &RESIDUAL_HEADER, &rows)?;
    }
    Ok(decision_code(v.decision))
}

#[derive(Serialize)]
struct CorpusRow {
    name: &'static str,
    spec: &'static str,
    m: usize,
    n: usize,
    theorem: Theorem,
    expected: Decision,
    decision: Decision,
    growth_outcome: LittleO,
    relative_residual: Option<f64>,
}

#[derive(Serialize)]
struct CorpusReport<'a> {
    entries: &'a [CorpusRow],
    misclassified: usize,
    inconclusive: usize,
    passed: bool,
}

pub fn report(cfg: &RunConfig) -> Result<u8, CliError> {
    let mut rows = Vec::new();
    for e in corpus() {
        let u = e.field()?;
        let res = remove_singularity(&u, &cfg.pipeline_for(&e))?;
        let v = res.verdict;
        println!("{:<22} expected {:<13} got {}", e.name, e.expected.to_string(), v.decision);
        rows.push(CorpusRow {
            name: e.name,
            spec: e.spec,
            m: e.m,
            n: e.n,
            theorem: e.theorem,
            expected: e.expected,
            decision: v.decision,
            growth_outcome: v.growth_outcome,
            relative_residual: v.relative_residual,
        });
    }
    let inconclusive = rows.iter().filter(|r| r.decision == Decision::Inconclusive).count();
    let misclassified = rows
        .iter()
        .filter(|r| r.decision != Decision::Inconclusive && r.decision != r.expected)
        .count();
    let passed = misclassified == 0 && inconclusive * 12 <= rows.len();
    println!("misclassified {misclassified}, inconclusive {inconclusive} of {}", rows.len());
    if let Some(dir) = &cfg.out {
        let report = CorpusReport {
            entries: &rows,
            misclassified,
            inconclusive,
            passed,
        };
        write_json(dir, "verdict.json", cfg, &report)?;
        write_csv(
            dir,
            "corpus.csv",
            &["name", "spec", "m", "n", "theorem", "expected", "decision", "growth_outcome", "relative_residual"],
            &rows,
        )?;
    }
    Ok(if misclassified > 0 {
        EXIT_NOT_REMOVABLE
    } else {
        pass_code(passed)
    })
}
