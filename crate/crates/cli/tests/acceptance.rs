//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails. Run with
//! `cargo test -p randode-cli --test acceptance`.

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use randode::{
    build_reference_b, confidence_band, convergence_slope, exact_derivative_a, exact_solution_a, make_oracle,
    martingale_diagnostic, run_batch, run_explicit_euler, run_implicit_euler, run_rk2, xi_hat, BatchCell,
    ClassParams, DeltaRule, ImplicitOptions, IvpSpec, NoiseKind, NoiseModel, ReferenceSolution, SchemeKind,
    TestProblem,
};
use randode_cli::commands::{compute_table, TABLE_ROWS};
use randode_cli::config::{table_columns, DeltaDefault, Defaults};
use randode_cli::{ConfigFile, ExperimentConfig};

const SEED: u64 = 1;

struct Outcome {
    passed: bool,
    detail: String,
}

fn config(problem: &str, scheme: &str, n: &[usize], delta: &[&str], reps: Option<usize>, cache: &Path) -> ExperimentConfig {
    let raw = ConfigFile {
        problem: Some(problem.into()),
        scheme: Some(scheme.into()),
        n: Some(n.to_vec()),
        delta: (!delta.is_empty()).then(|| delta.iter().map(|d| d.to_string()).collect()),
        replications: reps,
        seed: Some(SEED),
        ref_cache: Some(cache.to_path_buf()),
        ..ConfigFile::default()
    };
    let defaults = Defaults { n_list: TABLE_ROWS.to_vec(), delta: DeltaDefault::TableColumns };
    ExperimentConfig::resolve(raw, &defaults).expect("valid config")
}

fn table_values(cfg: &ExperimentConfig) -> Vec<Option<f64>> {
    compute_table(cfg).expect("table runs").iter().map(|c| c.xi_hat).collect()
}

fn within(got: Option<f64>, expected: f64, tol: f64) -> bool {
    got.is_some_and(|v| (v - expected).abs() <= tol)
}

fn show(v: Option<f64>) -> String {
    v.map_or("NA".into(), |x| format!("{x:.4}"))
}

fn table_reproduction(cache: &Path) -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    type Case<'a> = (&'a str, &'a str, &'a [(usize, f64)], f64);
    let cases: [Case; 4] = [
        ("A", "ee", &[(10, 2.29), (100, 2.04), (1000, 1.89)], 0.05),
        ("A", "rk", &[(10, 4.78), (1000, 5.81)], 0.10),
        ("B", "ee", &[(10, 0.166)], 0.01),
        ("B", "rk", &[(10, 0.485)], 0.02),
    ];
    for (problem, scheme, targets, tol) in cases {
        let ns: Vec<usize> = targets.iter().map(|t| t.0).collect();
        let values = table_values(&config(problem, scheme, &ns, &["0"], Some(100_000), cache));
        for (&(n, expected), got) in targets.iter().zip(values) {
            let ok = within(got, expected, tol);
            passed &= ok;
            parts.push(format!("{scheme}/{problem} n={n}: {} vs {expected}±{tol}{}", show(got), if ok { "" } else { " (miss)" }));
        }
    }
    Outcome { passed, detail: parts.join("; ") }
}

fn delta_interaction(cache: &Path) -> Outcome {
    let cfg = config("A", "ee", &TABLE_ROWS, &[], None, cache);
    assert_eq!(cfg.delta_rules, table_columns(1.0));
    let values = table_values(&cfg);
    let cols = cfg.delta_rules.len();
    let col = |rule: DeltaRule| cfg.delta_rules.iter().position(|r| *r == rule).unwrap();
    let (zero, power_one, power_09) = (col(DeltaRule::Zero), col(DeltaRule::Power(1.0)), col(DeltaRule::Power(0.9)));
    let mut passed = values.iter().all(Option::is_some);
    let mut not_max = Vec::new();
    let mut coherence: f64 = 0.0;
    for (row, &n) in values.chunks(cols).zip(TABLE_ROWS.iter()) {
        let row: Vec<f64> = row.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        if row.iter().any(|&v| v > row[power_one]) {
            not_max.push(n);
        }
        if n >= 1000 {
            for (k, rule) in cfg.delta_rules.iter().enumerate() {
                if matches!(rule, DeltaRule::Power(p) if *p >= 1.0) {
                    coherence = coherence.max((row[k] - row[zero]).abs());
                }
            }
        }
    }
    let last = &values[(TABLE_ROWS.len() - 1) * cols..];
    let (at_09, at_0) = (last[power_09].unwrap_or(f64::NAN), last[zero].unwrap_or(f64::NAN));
    passed &= not_max.is_empty() && at_09 < at_0;
    Outcome {
        passed,
        detail: format!(
            "(a) n^-1 column is the row maximum{}; (b) n=5000: n^-0.9 {at_09:.4} < delta=0 {at_0:.4}; \
             [info] max |n^-p - delta=0| for p >= 1, n >= 1000: {coherence:.4}",
            if not_max.is_empty() { " in every row".to_string() } else { format!(" except at n = {not_max:?}") }
        ),
    }
}

fn convergence_orders(reference_b: &Arc<ReferenceSolution<f64>>) -> Outcome {
    let ladder = [64, 128, 256, 512, 1024];
    let mut passed = true;
    let mut parts = Vec::new();
    for problem in [TestProblem::A, TestProblem::B] {
        let reference = match problem {
            TestProblem::A => Arc::new(ReferenceSolution::problem_a()),
            TestProblem::B => reference_b.clone(),
        };
        for scheme in [SchemeKind::ExplicitEuler, SchemeKind::ImplicitEuler, SchemeKind::RungeKutta2] {
            let cells: Vec<BatchCell<f64>> = ladder
                .iter()
                .map(|&n| BatchCell::new(problem.spec(), reference.clone(), scheme, n).with_noise(NoiseKind::Exact))
                .collect();
            let fit = convergence_slope(&cells, 100, SEED, 0).expect("slope fit");
            let (lo, hi) = if scheme == SchemeKind::RungeKutta2 { (-1.65, -1.35) } else { (-1.15, -0.85) };
            let ok = (lo..=hi).contains(&fit.slope);
            passed &= ok;
            parts.push(format!("{scheme}/{problem} {:.3}", fit.slope));
        }
    }
    Outcome { passed, detail: format!("{} (EE/IE in [-1.15,-0.85], RK in [-1.65,-1.35])", parts.join(", ")) }
}

fn martingale() -> Outcome {
    let report = martingale_diagnostic(0.0, 1.0, &exact_solution_a::<f64>, &exact_derivative_a::<f64>, 10, 100_000, SEED)
        .expect("diagnostic runs");
    let z = report.max_z_score();
    Outcome { passed: z <= 4.0, detail: format!("n=10, reps=1e5, largest |mean|/se = {z:.3} (limit 4)") }
}

fn quantile_growth() -> Outcome {
    let cell = BatchCell::new(TestProblem::A.spec(), Arc::new(ReferenceSolution::problem_a()), SchemeKind::ExplicitEuler, 100);
    let batch = run_batch(&cell, 100_000, SEED, 0).expect("batch runs");
    let eps = [0.05, 0.01, 0.001];
    let q: Vec<f64> = eps.iter().map(|&e| xi_hat(&batch, e, 1.0).unwrap().xi_hat).collect();
    let mut passed = true;
    let mut parts = vec![format!("xi_hat = {:.4}, {:.4}, {:.4}", q[0], q[1], q[2])];
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let ratio = q[j] / q[i];
        let bound = (eps[j].ln() / eps[i].ln()).sqrt() + 0.35;
        passed &= ratio <= bound;
        parts.push(format!("{}->{}: {ratio:.3} <= {bound:.3}", eps[i], eps[j]));
    }
    Outcome { passed, detail: parts.join("; ") }
}

fn band_coverage() -> Outcome {
    let n = 25;
    let reps = 10_000u64;
    let problem = TestProblem::A.spec::<f64>();
    let reference = ReferenceSolution::problem_a();
    let delta = 1.0 / n as f64;
    let model = NoiseModel::new(NoiseKind::RelativeEe, delta).unwrap();
    let mut covered = 0u64;
    for rep in 0..reps {
        let mut oracle = make_oracle(&problem, model, SEED, rep).unwrap();
        let tr = run_explicit_euler(&mut oracle, n).unwrap();
        let band = confidence_band(&tr, 1.0, delta, 3.0, 201).unwrap();
        covered += band.contains(&reference).unwrap() as u64;
    }
    let coverage = covered as f64 / reps as f64;
    let se = (0.95f64 * 0.05 / reps as f64).sqrt();
    let floor = 0.95 - 3.0 * se;
    Outcome { passed: coverage >= floor, detail: format!("xi=3, n=25, delta=1/25: coverage {coverage:.4} >= {floor:.4}") }
}

fn linear_decay() -> IvpSpec<f64> {
    let class = ClassParams::new(1.0, 1.0, 1.0, f64::INFINITY).unwrap();
    IvpSpec::new("decay", 0.0, 1.0, vec![1.0], |_t: f64, x: &[f64], o: &mut [f64]| o[0] = -x[0], class).unwrap()
}

fn determinism_and_oracles(reference_b: &ReferenceSolution<f64>) -> Outcome {
    let mut parts = Vec::new();

    let mut identical = true;
    for scheme in [SchemeKind::ExplicitEuler, SchemeKind::ImplicitEuler, SchemeKind::RungeKutta2] {
        let cell = BatchCell::new(TestProblem::A.spec::<f64>(), Arc::new(ReferenceSolution::problem_a()), scheme, 50)
            .with_delta(DeltaRule::Power(1.0));
        let base: Vec<u64> = run_batch(&cell, 2_000, SEED, 1).unwrap().errors().iter().map(|e| e.to_bits()).collect();
        for par in [0, 2, 4, 8] {
            let other: Vec<u64> = run_batch(&cell, 2_000, SEED, par).unwrap().errors().iter().map(|e| e.to_bits()).collect();
            identical &= base == other;
        }
    }
    parts.push(format!("batches bitwise identical at parallelism 1/0/2/4/8: {identical}"));

    let problem = TestProblem::A.spec::<f64>();
    let mut hand = 0.0f64;
    for scheme in [SchemeKind::ExplicitEuler, SchemeKind::RungeKutta2] {
        let mut o = make_oracle(&problem, NoiseModel::exact(), SEED, 0).unwrap();
        o.force_taus(vec![0.5]);
        let tr = if scheme == SchemeKind::ExplicitEuler { run_explicit_euler(&mut o, 1) } else { run_rk2(&mut o, 1) }.unwrap();
        hand = hand.max((tr.node(1)[0] - 2.0).abs());
    }
    parts.push(format!("one-step hand values off by {hand:e}"));

    let decay = linear_decay();
    let mut implicit = 0.0f64;
    for n in [4, 10, 50] {
        let mut o = make_oracle(&decay, NoiseModel::exact(), SEED, 0).unwrap();
        let tr = run_implicit_euler(&mut o, n, &ImplicitOptions::default()).unwrap();
        let h = 1.0 / n as f64;
        for j in 0..=n {
            implicit = implicit.max((tr.node(j)[0] - (1.0 + h).powi(-(j as i32))).abs());
        }
    }
    parts.push(format!("implicit Euler vs (1+h)^-j off by {implicit:e}"));

    let n = 1_000_000;
    let mut o = make_oracle(&TestProblem::B.spec::<f64>(), NoiseModel::exact(), SEED, 0).unwrap();
    let tr = run_rk2(&mut o, n).unwrap();
    let mut cross = 0.0f64;
    for j in (0..=n).step_by(1000) {
        let z = reference_b.value(j as f64 / n as f64).unwrap()[0];
        cross = cross.max((tr.node(j)[0] - z).abs());
    }
    parts.push(format!("reference B vs RK n=1e6 off by {cross:e}"));

    let passed = identical && hand <= 1e-14 && implicit <= 1e-10 && cross <= 1e-6;
    Outcome { passed, detail: parts.join("; ") }
}

fn main() -> ExitCode {
    let cache = tempfile::tempdir().expect("temporary cache");
    let reference_b: Arc<ReferenceSolution<f64>> =
        Arc::new(build_reference_b(2_000_000, &cache.path().join("ref_B_2000000.bin")).expect("reference B"));

    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("1 table reproduction", Box::new(|| table_reproduction(cache.path()))),
        ("2 delta interaction", Box::new(|| delta_interaction(cache.path()))),
        ("3 convergence orders", Box::new(|| convergence_orders(&reference_b))),
        ("4 martingale", Box::new(martingale)),
        ("5 quantile growth", Box::new(quantile_growth)),
        ("6 band coverage", Box::new(band_coverage)),
        ("7 determinism and oracles", Box::new(|| determinism_and_oracles(&reference_b))),
    ];
    let mut failures = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let outcome = check();
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        failures += !outcome.passed as usize;
        println!("{verdict} criterion {name}: {} [{:.1}s]", outcome.detail, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
