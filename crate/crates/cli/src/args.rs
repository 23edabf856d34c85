use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::ConfigFile;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "randode", version, about = "Randomized ODE schemes under noisy information: experiments and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trajectory and write its nodes as CSV.
    Solve(SolveArgs),
    /// Tabulate the quantile multiplier ξ̂ over step counts and δ rules.
    Table(TableArgs),
    /// Confidence band around one trajectory (CSV and SVG).
    Band(BandArgs),
    /// Empirical exceedance probabilities over a grid of multipliers.
    Tail(TailArgs),
    /// Martingale, convergence-order and noise-bound checks.
    Diagnose(DiagnoseArgs),
    /// Build (or verify) the cached reference solution of problem B.
    BuildRef(BuildRefArgs),
}

/// Flags shared by every command; each overrides the matching config key.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with `key = value` settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Test problem: A or B.
    #[arg(long)]
    pub problem: Option<String>,
    /// Scheme: ee, ie or rk.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Noise model: exact, ee, ie or rk (defaults to the scheme's own).
    #[arg(long)]
    pub noise: Option<String>,
    /// Initial-value noise: unperturbed or ball.
    #[arg(long)]
    pub initial: Option<String>,
    /// Step counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// δ rules, comma separated: 0, a literal, or n^-p.
    #[arg(long, value_delimiter = ',')]
    pub delta: Option<Vec<String>>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Replications per cell (default: 10⁵ for n < 1000, 10⁴ otherwise).
    #[arg(long = "N")]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads: 0 for all cores, 1 for sequential.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Sampling points per step for the sup-norm error.
    #[arg(long)]
    pub subsamples: Option<usize>,
    /// Steps of the problem-B reference solution.
    #[arg(long)]
    pub ref_steps: Option<usize>,
    /// Directory of the reference cache.
    #[arg(long)]
    pub ref_cache: Option<PathBuf>,
}

impl CommonArgs {
    /// Config file (if any) with the flags applied on top.
    pub fn raw_config(&self) -> Result<ConfigFile, CliError> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let flags = ConfigFile {
            problem: self.problem.clone(),
            scheme: self.scheme.clone(),
            noise: self.noise.clone(),
            initial: self.initial.clone(),
            n: self.n.clone(),
            delta: self.delta.clone(),
            epsilon: self.epsilon,
            replications: self.replications,
            seed: self.seed,
            out: self.out.clone(),
            subsamples: self.subsamples,
            parallelism: self.parallelism,
            ref_steps: self.ref_steps,
            ref_cache: self.ref_cache.clone(),
        };
        Ok(file.merge(flags))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also write the interpolant at this many equispaced times.
    #[arg(long)]
    pub dense: Option<usize>,
    /// Fixed step offsets τ (cycled), replacing the random draws.
    #[arg(long, value_delimiter = ',', hide = true)]
    pub force_tau: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct TableArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BandArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Band multiplier ξ(ε).
    #[arg(long, allow_negative_numbers = true)]
    pub xi: f64,
    /// Number of equispaced band sampling times.
    #[arg(long, default_value_t = 201)]
    pub grid_points: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TailArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Multiplier grid as start:stop:step.
    #[arg(long, default_value = "0:8:0.25")]
    pub xi_grid: String,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Replications of the martingale check.
    #[arg(long, default_value_t = 100_000)]
    pub martingale_reps: usize,
    /// Replications per ladder point of the convergence-order check.
    #[arg(long, default_value_t = 200)]
    pub slope_reps: usize,
    /// Scale the emitted noise by this factor while declaring the nominal model.
    #[arg(long, hide = true, num_args = 0..=1, default_missing_value = "2")]
    pub tamper_noise: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct BuildRefArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}
