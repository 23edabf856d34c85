use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use randode::analysis::reference::ReferenceSolution;
use randode::{
    build_reference_b, confidence_band, exact_derivative_a, exact_solution_a, make_oracle, martingale_diagnostic,
    run_batch, run_scheme, tail_curve, verify_noise_bound, xi_hat, BatchCell, DeltaRule, ImplicitOptions, NoiseModel,
    SchemeKind, TestProblem,
};

use crate::args::{BandArgs, BuildRefArgs, DiagnoseArgs, SolveArgs, TableArgs, TailArgs};
use crate::config::{gamma, DeltaDefault, Defaults, ExperimentConfig};
use crate::manifest::{CellRecord, ManifestBuilder};
use crate::CliError;

/// Default table rows.
pub const TABLE_ROWS: [usize; 9] = [10, 20, 50, 100, 200, 500, 1000, 2000, 5000];

fn reference_for(cfg: &ExperimentConfig, manifest: Option<&mut ManifestBuilder>) -> Result<Arc<ReferenceSolution<f64>>, CliError> {
    let reference = match cfg.problem {
        TestProblem::A => ReferenceSolution::problem_a(),
        TestProblem::B => build_reference_b(cfg.ref_steps, &cfg.reference_path())?,
    };
    if let Some(m) = manifest {
        m.reference = Some(match reference.meta() {
            Some(meta) => format!("{} {} n_ref={} sha256={}", meta.problem, meta.method, meta.n_ref, meta.checksum),
            None => "analytic exp(t^2)".into(),
        });
    }
    Ok(Arc::new(reference))
}

fn single<T: Copy>(what: &str, values: &[T]) -> Result<T, CliError> {
    match values {
        [v] => Ok(*v),
        _ => Err(CliError::Usage(format!("this command takes a single {what}"))),
    }
}

fn cell(cfg: &ExperimentConfig, reference: &Arc<ReferenceSolution<f64>>, n: usize, delta: DeltaRule) -> BatchCell<f64> {
    BatchCell::new(cfg.problem.spec(), reference.clone(), cfg.scheme, n)
        .with_delta(delta)
        .with_noise(cfg.noise)
        .with_initial(cfg.initial)
        .with_subsamples(cfg.subsamples_per_step)
}

fn file_stem(cfg: &ExperimentConfig) -> String {
    format!("{}_{}", cfg.scheme.name(), cfg.problem.name())
}

fn rule_label(rule: &DeltaRule) -> String {
    rule.to_string().replace('^', "").replace('-', "m")
}

/// Runs `f` on a pool sized by `parallelism` (0 = global pool).
fn with_pool<R: Send>(parallelism: usize, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    if parallelism == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let defaults = Defaults { n_list: vec![10], delta: DeltaDefault::Fixed(vec![DeltaRule::Zero]) };
    let cfg = ExperimentConfig::resolve(args.common.raw_config()?, &defaults)?;
    let n = single("n", &cfg.n_list)?;
    let delta = single("delta rule", &cfg.delta_rules)?;
    let problem = cfg.problem.spec::<f64>();
    let model = NoiseModel::new(cfg.noise, delta.value(n))?.with_initial(cfg.initial);
    let mut oracle = make_oracle(&problem, model, cfg.master_seed, 0)?;
    if let Some(taus) = &args.force_tau {
        if taus.is_empty() || taus.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(CliError::Usage("forced tau values must lie in [0, 1]".into()));
        }
        oracle.force_taus(taus.clone());
    }
    let tr = run_scheme(cfg.scheme, &mut oracle, n, &ImplicitOptions::default())?;

    let mut manifest = ManifestBuilder::new("solve", cfg.snapshot());
    let stem = format!("solve_{}_n{n}", file_stem(&cfg));
    let mut csv = Vec::new();
    tr.write_csv(&mut csv).expect("writing to memory");
    let path = manifest.write_output(&cfg.output_dir, &format!("{stem}.csv"), &csv)?;
    println!("{}", path.display());
    if let Some(points) = args.dense {
        let mut dense = Vec::new();
        tr.write_dense_csv(&mut dense, points).map_err(|e| CliError::Check(e.to_string()))?;
        let path = manifest.write_output(&cfg.output_dir, &format!("{stem}_dense.csv"), &dense)?;
        println!("{}", path.display());
    }
    manifest.finish(&cfg.output_dir, &format!("{stem}.manifest.json"))?;
    Ok(())
}

/// One table cell: `ξ̂` or the error that prevented it.
fn table_cell(cfg: &ExperimentConfig, reference: &Arc<ReferenceSolution<f64>>, n: usize, rule: DeltaRule, gamma: f64) -> CellRecord {
    let inner = if cfg.parallelism == 1 { 1 } else { 0 };
    let c = cell(cfg, reference, n, rule);
    let reps = cfg.replications_for(n);
    let mut record = CellRecord {
        n,
        delta_rule: rule.to_string(),
        delta: c.delta_value(),
        replications: reps,
        xi_hat: None,
        errors_sha256: None,
        error: None,
    };
    match run_batch(&c, reps, cfg.master_seed, inner).and_then(|b| Ok((xi_hat(&b, cfg.epsilon, gamma)?, b.checksum()))) {
        Ok((q, checksum)) => {
            record.xi_hat = Some(q.xi_hat);
            record.errors_sha256 = Some(checksum);
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Computes the table without writing anything; rows follow `n_list`,
/// columns follow `delta_rules`.
pub fn compute_table(cfg: &ExperimentConfig) -> Result<Vec<CellRecord>, CliError> {
    let reference = reference_for(cfg, None)?;
    let g = gamma(cfg.problem, cfg.scheme);
    let jobs: Vec<(usize, DeltaRule)> =
        cfg.n_list.iter().flat_map(|&n| cfg.delta_rules.iter().map(move |&r| (n, r))).collect();
    if cfg.parallelism == 1 {
        return Ok(jobs.iter().map(|&(n, r)| table_cell(cfg, &reference, n, r, g)).collect());
    }
    with_pool(cfg.parallelism, || jobs.par_iter().map(|&(n, r)| table_cell(cfg, &reference, n, r, g)).collect())
}

pub fn render_table(cfg: &ExperimentConfig, cells: &[CellRecord]) -> String {
    let mut out = String::from("n");
    for rule in &cfg.delta_rules {
        write!(out, ",{rule}").unwrap();
    }
    out.push('\n');
    for row in cells.chunks(cfg.delta_rules.len()) {
        write!(out, "{}", row[0].n).unwrap();
        for c in row {
            match c.xi_hat {
                Some(x) => write!(out, ",{x:.4}").unwrap(),
                None => out.push_str(",NA"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn table(args: &TableArgs) -> Result<(), CliError> {
    let defaults = Defaults { n_list: TABLE_ROWS.to_vec(), delta: DeltaDefault::TableColumns };
    let cfg = ExperimentConfig::resolve(args.common.raw_config()?, &defaults)?;
    for w in cfg.check_quantile_replications()? {
        eprintln!("warning: {w}");
    }
    let mut manifest = ManifestBuilder::new("table", cfg.snapshot());
    reference_for(&cfg, Some(&mut manifest))?;
    let cells = compute_table(&cfg)?;
    let text = render_table(&cfg, &cells);
    print!("{text}");
    let stem = format!("table_{}", file_stem(&cfg));
    let path = manifest.write_output(&cfg.output_dir, &format!("{stem}.csv"), text.as_bytes())?;
    let failed: Vec<String> = cells
        .iter()
        .filter_map(|c| c.error.as_ref().map(|e| format!("n = {}, delta = {}: {e}", c.n, c.delta_rule)))
        .collect();
    manifest.cells = cells;
    manifest.finish(&cfg.output_dir, &format!("{stem}.manifest.json"))?;
    eprintln!("wrote {}", path.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("{} table cell(s) failed:\n{}", failed.len(), failed.join("\n"))))
    }
}

pub fn band(args: &BandArgs) -> Result<(), CliError> {
    if !(args.xi > 0.0 && args.xi.is_finite()) {
        return Err(CliError::Usage(format!("--xi must be positive, got {}", args.xi)));
    }
    let defaults = Defaults { n_list: vec![25], delta: DeltaDefault::GammaPower };
    let cfg = ExperimentConfig::resolve(args.common.raw_config()?, &defaults)?;
    let n = single("n", &cfg.n_list)?;
    let rule = single("delta rule", &cfg.delta_rules)?;
    let mut manifest = ManifestBuilder::new("band", cfg.snapshot());
    let reference = reference_for(&cfg, Some(&mut manifest))?;

    let delta = if cfg.noise == randode::NoiseKind::Exact { 0.0 } else { rule.value::<f64>(n) };
    let model = NoiseModel::new(cfg.noise, delta)?.with_initial(cfg.initial);
    let mut oracle = make_oracle(&cfg.problem.spec(), model, cfg.master_seed, 0)?;
    let tr = run_scheme(cfg.scheme, &mut oracle, n, &ImplicitOptions::default())?;
    let g = gamma(cfg.problem, cfg.scheme);
    let band = confidence_band(&tr, g, delta, args.xi, args.grid_points)?.with_epsilon(cfg.epsilon);
    let inside = band.contains(&reference)?;

    let stem = format!("band_{}_n{n}", file_stem(&cfg));
    let mut csv = Vec::new();
    band.write_csv(&mut csv, Some(&reference)).map_err(|e| CliError::Check(e.to_string()))?;
    manifest.write_output(&cfg.output_dir, &format!("{stem}.csv"), &csv)?;
    let mut svg = Vec::new();
    band.write_svg(&mut svg, Some(&reference)).map_err(|e| CliError::Check(e.to_string()))?;
    manifest.write_output(&cfg.output_dir, &format!("{stem}.svg"), &svg)?;
    manifest.finish(&cfg.output_dir, &format!("{stem}.manifest.json"))?;
    println!("radius {}", band.radius);
    println!("reference inside band: {}", if inside { "yes" } else { "no" });
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("xi grid must be start:stop:step with step > 0, got {spec:?}"));
    let parts: Vec<f64> = spec.split(':').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0 && start <= stop && start >= 0.0) {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| start + k as f64 * step).collect())
}

pub fn tail(args: &TailArgs) -> Result<(), CliError> {
    let grid = parse_grid(&args.xi_grid)?;
    let defaults = Defaults { n_list: vec![100], delta: DeltaDefault::Fixed(vec![DeltaRule::Zero]) };
    let cfg = ExperimentConfig::resolve(args.common.raw_config()?, &defaults)?;
    for w in cfg.check_quantile_replications()? {
        eprintln!("warning: {w}");
    }
    let mut manifest = ManifestBuilder::new("tail", cfg.snapshot());
    let reference = reference_for(&cfg, Some(&mut manifest))?;
    let g = gamma(cfg.problem, cfg.scheme);
    for &n in &cfg.n_list {
        for &rule in &cfg.delta_rules {
            let c = cell(&cfg, &reference, n, rule);
            let reps = cfg.replications_for(n);
            let batch = run_batch(&c, reps, cfg.master_seed, cfg.parallelism)?;
            let q = xi_hat(&batch, cfg.epsilon, g)?;
            let curve = tail_curve(&batch, g, &grid)?;
            let stem = format!("tail_{}_n{n}_d{}", file_stem(&cfg), rule_label(&rule));
            let mut csv = Vec::new();
            curve.write_csv(&mut csv).expect("writing to memory");
            manifest.write_output(&cfg.output_dir, &format!("{stem}.csv"), &csv)?;
            let mut errors = Vec::new();
            batch.write_csv(&mut errors).expect("writing to memory");
            manifest.write_output(&cfg.output_dir, &format!("{stem}_errors.csv"), &errors)?;
            println!("n = {n}, delta = {rule}: xi_hat({}) = {:.4}", cfg.epsilon, q.xi_hat);
            manifest.cells.push(CellRecord {
                n,
                delta_rule: rule.to_string(),
                delta: c.delta_value(),
                replications: reps,
                xi_hat: Some(q.xi_hat),
                errors_sha256: Some(batch.checksum()),
                error: None,
            });
        }
    }
    manifest.finish(&cfg.output_dir, &format!("tail_{}.manifest.json", file_stem(&cfg)))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseReport {
    pub problem: String,
    pub scheme: String,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

/// Interval the fitted log-log slope must fall in.
pub fn slope_window(scheme: SchemeKind) -> (f64, f64) {
    match scheme {
        SchemeKind::RungeKutta2 => (-1.65, -1.35),
        _ => (-1.15, -0.85),
    }
}

pub const SLOPE_LADDER: [usize; 5] = [64, 128, 256, 512, 1024];

pub fn run_diagnostics(cfg: &ExperimentConfig, args: &DiagnoseArgs) -> Result<DiagnoseReport, CliError> {
    let mut checks = Vec::new();

    if cfg.problem == TestProblem::A {
        let report = martingale_diagnostic(0.0, 1.0, &exact_solution_a, &exact_derivative_a, 10, args.martingale_reps, cfg.master_seed)?;
        let z = report.max_z_score();
        checks.push(CheckResult {
            name: "martingale".into(),
            passed: z <= 4.0,
            detail: format!("n = 10, reps = {}, largest |mean|/se = {z:.3} (limit 4)", args.martingale_reps),
        });
    }

    let reference = reference_for(cfg, None)?;
    let cells: Vec<BatchCell<f64>> = SLOPE_LADDER
        .iter()
        .map(|&n| cell(cfg, &reference, n, DeltaRule::Zero).with_noise(randode::NoiseKind::Exact))
        .collect();
    let fit = randode::convergence_slope(&cells, args.slope_reps, cfg.master_seed, cfg.parallelism)?;
    let (lo, hi) = slope_window(cfg.scheme);
    checks.push(CheckResult {
        name: "convergence_slope".into(),
        passed: fit.slope >= lo && fit.slope <= hi,
        detail: format!("slope = {:.4} ± {:.4} over n = 64..1024, window [{lo}, {hi}]", fit.slope, fit.ci_half_width),
    });

    let n = cfg.n_list[0];
    let rule = cfg.delta_rules[0];
    let delta = rule.value::<f64>(n);
    let model = NoiseModel::new(cfg.noise, delta)?.with_initial(cfg.initial);
    let problem = cfg.problem.spec::<f64>();
    let mut ok = true;
    let mut samples = 0usize;
    for rep in 0..50u64 {
        let mut oracle = make_oracle(&problem, model, cfg.master_seed, rep)?;
        if let Some(gain) = args.tamper_noise {
            oracle.amplify_noise(gain);
        }
        oracle.record_samples();
        run_scheme(cfg.scheme, &mut oracle, n, &ImplicitOptions::default())?;
        let recorded = oracle.take_samples();
        samples += recorded.len();
        ok &= verify_noise_bound(&model, &recorded);
    }
    checks.push(CheckResult {
        name: "noise_bound".into(),
        passed: ok,
        detail: format!("{} noise, delta = {delta:e} (n = {n}), {samples} evaluations", cfg.noise),
    });

    let passed = checks.iter().all(|c| c.passed);
    Ok(DiagnoseReport { problem: cfg.problem.name().into(), scheme: cfg.scheme.name().into(), passed, checks })
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<(), CliError> {
    let defaults = Defaults { n_list: vec![SLOPE_LADDER[0]], delta: DeltaDefault::GammaPower };
    let cfg = ExperimentConfig::resolve(args.common.raw_config()?, &defaults)?;
    let mut manifest = ManifestBuilder::new("diagnose", cfg.snapshot());
    let report = run_diagnostics(&cfg, args)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    print!("{json}");
    let stem = format!("diagnose_{}", file_stem(&cfg));
    manifest.write_output(&cfg.output_dir, &format!("{stem}.json"), json.as_bytes())?;
    manifest.finish(&cfg.output_dir, &format!("{stem}.manifest.json"))?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(CliError::Check(format!("failed checks: {}", failed.join(", "))))
    }
}

pub fn build_ref(args: &BuildRefArgs) -> Result<(), CliError> {
    let defaults = Defaults { n_list: vec![10], delta: DeltaDefault::Fixed(vec![DeltaRule::Zero]) };
    let mut raw = args.common.raw_config()?;
    raw.problem = Some("B".into());
    let cfg = ExperimentConfig::resolve(raw, &defaults)?;
    let path = cfg.reference_path();
    let reference = build_reference_b::<f64>(cfg.ref_steps, &path)?;
    let meta = reference.meta().expect("dense reference carries metadata");
    println!("{}", path.display());
    println!("n_ref = {}, sha256 = {}, z(1) = {}", meta.n_ref, meta.checksum, reference.value(1.0)?[0]);
    Ok(())
}
