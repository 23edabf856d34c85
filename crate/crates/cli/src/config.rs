//! Experiment configuration: a flat `key = value` TOML file, overridden by
//! command-line flags.

use std::path::{Path, PathBuf};

use randode::{DeltaRule, InitialValueNoise, NoiseKind, SchemeKind, TestProblem};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Replications per cell when `N` is not given: 10⁴ for n ≥ 1000, 10⁵ below.
pub fn desk_replications(n: usize) -> usize {
    if n >= 1000 {
        10_000
    } else {
        100_000
    }
}

/// Raw file contents; every field optional so flags can fill the gaps.
#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: Option<String>,
    pub scheme: Option<String>,
    pub noise: Option<String>,
    pub initial: Option<String>,
    pub n: Option<Vec<usize>>,
    pub delta: Option<Vec<String>>,
    pub epsilon: Option<f64>,
    #[serde(rename = "N")]
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub subsamples: Option<usize>,
    pub parallelism: Option<usize>,
    pub ref_steps: Option<usize>,
    pub ref_cache: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merge(self, over: ConfigFile) -> ConfigFile {
        ConfigFile {
            problem: over.problem.or(self.problem),
            scheme: over.scheme.or(self.scheme),
            noise: over.noise.or(self.noise),
            initial: over.initial.or(self.initial),
            n: over.n.or(self.n),
            delta: over.delta.or(self.delta),
            epsilon: over.epsilon.or(self.epsilon),
            replications: over.replications.or(self.replications),
            seed: over.seed.or(self.seed),
            out: over.out.or(self.out),
            subsamples: over.subsamples.or(self.subsamples),
            parallelism: over.parallelism.or(self.parallelism),
            ref_steps: over.ref_steps.or(self.ref_steps),
            ref_cache: over.ref_cache.or(self.ref_cache),
        }
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: TestProblem,
    pub scheme: SchemeKind,
    pub noise: NoiseKind,
    pub initial: InitialValueNoise,
    pub n_list: Vec<usize>,
    pub delta_rules: Vec<DeltaRule>,
    pub epsilon: f64,
    /// `None` selects the desk profile per cell.
    pub replications: Option<usize>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub subsamples_per_step: usize,
    pub parallelism: usize,
    pub ref_steps: usize,
    pub ref_cache: PathBuf,
}

/// Per-command fallbacks for fields missing from both file and flags.
#[derive(Debug, Clone)]
pub struct Defaults {
    pub n_list: Vec<usize>,
    pub delta: DeltaDefault,
}

#[derive(Debug, Clone)]
pub enum DeltaDefault {
    Fixed(Vec<DeltaRule>),
    /// `0, n^-(γ+0.1), n^-γ, n^-(γ-0.1), 2·10⁻³, 10⁻⁴`, the default table columns.
    TableColumns,
    /// `n^-γ`.
    GammaPower,
}

/// Convergence exponent of `scheme` on `problem` with its default class.
pub fn gamma(problem: TestProblem, scheme: SchemeKind) -> f64 {
    randode::gamma_of(scheme, problem.class_params::<f64>().rho)
}

pub fn table_columns(gamma: f64) -> Vec<DeltaRule> {
    let round = |x: f64| (x * 1e6).round() / 1e6;
    vec![
        DeltaRule::Zero,
        DeltaRule::Power(round(gamma + 0.1)),
        DeltaRule::Power(gamma),
        DeltaRule::Power(round(gamma - 0.1)),
        DeltaRule::Literal(2e-3),
        DeltaRule::Literal(1e-4),
    ]
}

fn parse_with<T: std::str::FromStr<Err = randode::Error>>(what: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|e: randode::Error| CliError::Usage(format!("{what}: {e}")))
}

pub fn parse_initial(value: &str) -> Result<InitialValueNoise, CliError> {
    match value {
        "unperturbed" | "exact" => Ok(InitialValueNoise::Unperturbed),
        "ball" | "uniform-ball" => Ok(InitialValueNoise::UniformBall),
        other => Err(CliError::Usage(format!("unknown initial-value noise {other:?}, expected unperturbed or ball"))),
    }
}

pub fn initial_name(v: InitialValueNoise) -> &'static str {
    match v {
        InitialValueNoise::Unperturbed => "unperturbed",
        InitialValueNoise::UniformBall => "ball",
    }
}

impl ExperimentConfig {
    pub fn resolve(raw: ConfigFile, defaults: &Defaults) -> Result<Self, CliError> {
        let problem: TestProblem = parse_with("problem", raw.problem.as_deref().unwrap_or("A"))?;
        let scheme: SchemeKind = parse_with("scheme", raw.scheme.as_deref().unwrap_or("ee"))?;
        let noise = match raw.noise.as_deref() {
            Some(name) => parse_with("noise", name)?,
            None => scheme.native_noise(),
        };
        let initial = parse_initial(raw.initial.as_deref().unwrap_or("unperturbed"))?;
        let n_list = raw.n.unwrap_or_else(|| defaults.n_list.clone());
        if n_list.is_empty() || n_list.contains(&0) {
            return Err(CliError::Usage("n must be a nonempty list of positive step counts".into()));
        }
        let delta_rules = match raw.delta {
            Some(rules) => rules.iter().map(|r| parse_with("delta", r)).collect::<Result<Vec<DeltaRule>, _>>()?,
            None => match &defaults.delta {
                DeltaDefault::Fixed(rules) => rules.clone(),
                DeltaDefault::TableColumns => table_columns(gamma(problem, scheme)),
                DeltaDefault::GammaPower => vec![DeltaRule::Power(gamma(problem, scheme))],
            },
        };
        if delta_rules.is_empty() {
            return Err(CliError::Usage("at least one delta rule is required".into()));
        }
        let epsilon = raw.epsilon.unwrap_or(0.05);
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(CliError::Usage(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        if raw.replications == Some(0) {
            return Err(CliError::Usage("N must be positive".into()));
        }
        let subsamples = raw.subsamples.unwrap_or(randode::DEFAULT_SUBSAMPLES);
        if subsamples == 0 {
            return Err(CliError::Usage("subsamples must be at least 1".into()));
        }
        let ref_steps = raw.ref_steps.unwrap_or(randode::analysis::reference::DEFAULT_REFERENCE_STEPS);
        Ok(Self {
            problem,
            scheme,
            noise,
            initial,
            n_list,
            delta_rules,
            epsilon,
            replications: raw.replications,
            master_seed: raw.seed.unwrap_or(1),
            output_dir: raw.out.unwrap_or_else(|| PathBuf::from("results")),
            subsamples_per_step: subsamples,
            parallelism: raw.parallelism.unwrap_or(0),
            ref_steps,
            ref_cache: raw.ref_cache.unwrap_or_else(|| PathBuf::from(".randode-cache")),
        })
    }

    pub fn replications_for(&self, n: usize) -> usize {
        self.replications.unwrap_or_else(|| desk_replications(n))
    }

    /// Quantile commands need at least 100 replications per cell.
    pub fn check_quantile_replications(&self) -> Result<Vec<String>, CliError> {
        let mut warnings = Vec::new();
        for &n in &self.n_list {
            let reps = self.replications_for(n);
            if reps < 100 {
                return Err(CliError::Usage(format!("N = {reps} is below the minimum of 100 for quantile estimates")));
            }
            if (reps as f64) < 10.0 / self.epsilon {
                warnings.push(format!("N = {reps} is below 10/epsilon; the quantile estimate at n = {n} is coarse"));
            }
        }
        Ok(warnings)
    }

    pub fn reference_path(&self) -> PathBuf {
        self.ref_cache.join(format!("ref_B_{}.bin", self.ref_steps))
    }

    /// Resolved values in the file format, for manifests.
    pub fn snapshot(&self) -> ConfigFile {
        ConfigFile {
            problem: Some(self.problem.name().into()),
            scheme: Some(self.scheme.name().into()),
            noise: Some(self.noise.name().into()),
            initial: Some(initial_name(self.initial).into()),
            n: Some(self.n_list.clone()),
            delta: Some(self.delta_rules.iter().map(|r| r.to_string()).collect()),
            epsilon: Some(self.epsilon),
            replications: self.replications,
            seed: Some(self.master_seed),
            out: Some(self.output_dir.clone()),
            subsamples: Some(self.subsamples_per_step),
            parallelism: Some(self.parallelism),
            ref_steps: Some(self.ref_steps),
            ref_cache: Some(self.ref_cache.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> Defaults {
        Defaults { n_list: vec![10], delta: DeltaDefault::Fixed(vec![DeltaRule::Zero]) }
    }

    #[test]
    fn scheme_dependent_delta_defaults() {
        let columns = |scheme: &str| {
            let raw = ConfigFile { scheme: Some(scheme.into()), ..Default::default() };
            let d = Defaults { n_list: vec![10], delta: DeltaDefault::TableColumns };
            let rules = ExperimentConfig::resolve(raw, &d).unwrap().delta_rules;
            rules.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" ")
        };
        assert_eq!(columns("ee"), "0 n^-1.1 n^-1 n^-0.9 0.002 0.0001");
        assert_eq!(columns("rk"), "0 n^-1.6 n^-1.5 n^-1.4 0.002 0.0001");
        let raw = ConfigFile { scheme: Some("rk".into()), ..Default::default() };
        let d = Defaults { n_list: vec![25], delta: DeltaDefault::GammaPower };
        assert_eq!(ExperimentConfig::resolve(raw, &d).unwrap().delta_rules, vec![DeltaRule::Power(1.5)]);
    }

    #[test]
    fn file_values_are_overridden_by_flags() {
        let file: ConfigFile = toml::from_str(
            r#"
            problem = "B"
            scheme = "rk"
            n = [10, 20]
            delta = ["0", "n^-1.5", "0.002"]
            N = 500
            "#,
        )
        .unwrap();
        let flags = ConfigFile { scheme: Some("ee".into()), seed: Some(9), ..Default::default() };
        let cfg = ExperimentConfig::resolve(file.merge(flags), &defaults()).unwrap();
        assert_eq!(cfg.problem, TestProblem::B);
        assert_eq!(cfg.scheme, SchemeKind::ExplicitEuler);
        assert_eq!(cfg.noise, NoiseKind::RelativeEe);
        assert_eq!(cfg.n_list, vec![10, 20]);
        assert_eq!(cfg.delta_rules, vec![DeltaRule::Zero, DeltaRule::Power(1.5), DeltaRule::Literal(0.002)]);
        assert_eq!(cfg.replications_for(10), 500);
        assert_eq!(cfg.master_seed, 9);
    }

    #[test]
    fn desk_profile() {
        let cfg = ExperimentConfig::resolve(ConfigFile::default(), &defaults()).unwrap();
        assert_eq!(cfg.replications_for(500), 100_000);
        assert_eq!(cfg.replications_for(1000), 10_000);
        assert_eq!(cfg.initial, InitialValueNoise::Unperturbed);
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let bad = |raw: ConfigFile| matches!(ExperimentConfig::resolve(raw, &defaults()), Err(CliError::Usage(_)));
        assert!(bad(ConfigFile { scheme: Some("heun".into()), ..Default::default() }));
        assert!(bad(ConfigFile { delta: Some(vec!["n^x".into()]), ..Default::default() }));
        assert!(bad(ConfigFile { epsilon: Some(1.5), ..Default::default() }));
        assert!(bad(ConfigFile { n: Some(vec![0]), ..Default::default() }));
        assert!(toml::from_str::<ConfigFile>("colour = \"red\"").is_err());
    }

    #[test]
    fn quantile_commands_need_enough_replications() {
        let raw = ConfigFile { replications: Some(50), ..Default::default() };
        let cfg = ExperimentConfig::resolve(raw, &defaults()).unwrap();
        assert!(cfg.check_quantile_replications().is_err());
        let raw = ConfigFile { replications: Some(150), ..Default::default() };
        let cfg = ExperimentConfig::resolve(raw, &defaults()).unwrap();
        assert_eq!(cfg.check_quantile_replications().unwrap().len(), 1);
    }
}
