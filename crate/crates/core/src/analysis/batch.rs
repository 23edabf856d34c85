//! Monte Carlo batches: `N` independent replications of one experiment cell,
//! reduced to their sorted sup-norm errors.

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::analysis::reference::ReferenceSolution;
use crate::analysis::sup::{ErrorProbe, DEFAULT_SUBSAMPLES};
use crate::ivp::IvpSpec;
use crate::noise::{make_oracle, DeltaRule, InitialValueNoise, NoiseKind, NoiseModel};
use crate::schemes::{run_scheme, ImplicitOptions, SchemeKind};
use crate::{Error, Result, Scalar};

/// Everything that determines one replication except its index.
#[derive(Debug, Clone)]
pub struct BatchCell<T> {
    pub problem: IvpSpec<T>,
    pub reference: Arc<ReferenceSolution<T>>,
    pub scheme: SchemeKind,
    pub n: usize,
    pub delta: DeltaRule,
    pub noise: NoiseKind,
    pub initial: InitialValueNoise,
    pub subsamples: usize,
    pub implicit: ImplicitOptions<T>,
}

impl<T: Scalar> BatchCell<T> {
    /// Exact information, the scheme's own noise class and the default sampling.
    pub fn new(problem: IvpSpec<T>, reference: Arc<ReferenceSolution<T>>, scheme: SchemeKind, n: usize) -> Self {
        Self {
            problem,
            reference,
            scheme,
            n,
            delta: DeltaRule::Zero,
            noise: scheme.native_noise(),
            initial: InitialValueNoise::default(),
            subsamples: DEFAULT_SUBSAMPLES,
            implicit: ImplicitOptions::default(),
        }
    }

    pub fn with_delta(mut self, delta: DeltaRule) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_noise(mut self, noise: NoiseKind) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_initial(mut self, initial: InitialValueNoise) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_subsamples(mut self, subsamples: usize) -> Self {
        self.subsamples = subsamples;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn delta_value(&self) -> T {
        match self.noise {
            NoiseKind::Exact => T::zero(),
            _ => self.delta.value(self.n),
        }
    }

    pub fn noise_model(&self) -> Result<NoiseModel<T>> {
        Ok(NoiseModel::new(self.noise, self.delta_value())?.with_initial(self.initial))
    }

    pub fn step_size(&self) -> T {
        (self.problem.b() - self.problem.a()) / T::from_usize_lossy(self.n)
    }

    pub fn key(&self) -> CellKey {
        CellKey {
            problem: self.problem.name().to_string(),
            scheme: self.scheme,
            n: self.n,
            delta_rule: self.delta,
            delta: self.delta_value().as_f64(),
            noise: self.noise,
            h: self.step_size().as_f64(),
        }
    }
}

/// Identifies the cell a batch came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CellKey {
    pub problem: String,
    pub scheme: SchemeKind,
    pub n: usize,
    pub delta_rule: DeltaRule,
    /// δ evaluated at `n`.
    pub delta: f64,
    pub noise: NoiseKind,
    /// Step size `(b − a)/n`.
    pub h: f64,
}

/// Sorted sup-norm errors `r_{1:N} ≤ … ≤ r_{N:N}` of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBatch<T> {
    key: CellKey,
    errors: Vec<T>,
    master_seed: u64,
}

impl<T: Scalar> ErrorBatch<T> {
    /// Sorts `errors` (stable) and checks that they are finite and nonnegative.
    pub fn new(key: CellKey, mut errors: Vec<T>, master_seed: u64) -> Result<Self> {
        if errors.iter().any(|e| !(e.is_finite() && *e >= T::zero())) {
            return Err(Error::domain("errors must be finite and nonnegative"));
        }
        errors.sort_by(|x, y| x.partial_cmp(y).expect("finite errors"));
        Ok(Self { key, errors, master_seed })
    }

    pub fn key(&self) -> &CellKey {
        &self.key
    }

    pub fn errors(&self) -> &[T] {
        &self.errors
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn mean(&self) -> T {
        if self.errors.is_empty() {
            return T::zero();
        }
        self.errors.iter().copied().sum::<T>() / T::from_usize_lossy(self.errors.len())
    }

    /// SHA-256 over the little-endian `f64` images of the sorted errors.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for e in &self.errors {
            hasher.update(e.as_f64().to_le_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `rank,error` rows with 1-based ranks.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "rank,error")?;
        for (i, e) in self.errors.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, e)?;
        }
        Ok(())
    }
}

fn replicate<T: Scalar>(cell: &BatchCell<T>, model: NoiseModel<T>, probe: &ErrorProbe<T>, seed: u64, index: u64) -> Result<T> {
    let mut oracle = make_oracle(&cell.problem, model, seed, index)?;
    let tr = run_scheme(cell.scheme, &mut oracle, cell.n, &cell.implicit)?;
    probe.sup_error(&tr)
}

/// Runs `replications` independent replications; replication `i` uses the
/// streams of `(master_seed, i)`. The result does not depend on `parallelism`
/// (0 uses the global rayon pool, 1 runs inline, k > 1 uses k workers).
pub fn run_batch<T: Scalar>(
    cell: &BatchCell<T>,
    replications: usize,
    master_seed: u64,
    parallelism: usize,
) -> Result<ErrorBatch<T>> {
    if replications == 0 {
        return Err(Error::domain("a batch needs at least one replication"));
    }
    let model = cell.noise_model()?;
    let (a, b) = (cell.problem.a(), cell.problem.b());
    let probe = ErrorProbe::new(&cell.reference, a, b, cell.n, cell.subsamples)?;
    let one = |i: usize| replicate(cell, model, &probe, master_seed, i as u64);

    let results: Vec<Result<T>> = match parallelism {
        1 => (0..replications).map(one).collect(),
        0 => (0..replications).into_par_iter().map(one).collect(),
        k => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::domain(format!("cannot build worker pool: {e}")))?
            .install(|| (0..replications).into_par_iter().map(one).collect()),
    };

    let mut errors = Vec::with_capacity(replications);
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => errors.push(e),
            Err(source) => return Err(Error::Replication { index: index as u64, source: Box::new(source) }),
        }
    }
    ErrorBatch::new(cell.key(), errors, master_seed)
}
