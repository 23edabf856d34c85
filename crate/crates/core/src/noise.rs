//! Inexact information: perturbed right-hand sides `f̃ = f + δ̃` and perturbed
//! initial values `η̃ ∈ B(η, δ)`, served through a seeded, evaluation-counting
//! oracle.
//!
//! Four noise classes are supported:
//!
//! * `Exact`: `δ̃ ≡ 0`, `η̃ = η`.
//! * `RelativeEe`: `‖δ̃(t, y)‖ ≤ δ(1 + ‖y‖)`, fresh noise on every call. For
//!   `d = 1` the perturbation is `e·(1 + |y|)` with `e ~ U[-δ, δ]`.
//! * `RelativeLipschitzIe`: additionally `‖δ̃(t, x) − δ̃(t, y)‖ ≤ δ‖x − y‖`.
//!   Realised as `e₀·(1 + ‖y‖)·u` with `e₀ ~ U[-δ, δ]` and the direction `u`
//!   drawn once per oracle; fresh per-call noise could not satisfy the
//!   Lipschitz condition.
//! * `AbsoluteRk`: `‖δ̃(t, y)‖ ≤ δ`, fresh noise uniform on the ball of radius δ.
//!
//! For `d > 1` the relative classes use a uniform magnitude times a uniform
//! direction on the one-norm sphere, which keeps every bound exact.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::ivp::{one_norm, one_norm_diff, IvpSpec};
use crate::stream;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    Exact,
    RelativeEe,
    RelativeLipschitzIe,
    AbsoluteRk,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Exact => "exact",
            NoiseKind::RelativeEe => "ee",
            NoiseKind::RelativeLipschitzIe => "ie",
            NoiseKind::AbsoluteRk => "rk",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(NoiseKind::Exact),
            "ee" => Ok(NoiseKind::RelativeEe),
            "ie" => Ok(NoiseKind::RelativeLipschitzIe),
            "rk" => Ok(NoiseKind::AbsoluteRk),
            other => Err(Error::domain(format!("unknown noise model {other:?}, expected exact, ee, ie or rk"))),
        }
    }
}

/// How the initial value is perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum InitialValueNoise {
    /// `η̃ = η`; only the right-hand side is perturbed.
    #[default]
    Unperturbed,
    /// `η̃` uniform on the one-norm ball `B(η, δ)`.
    UniformBall,
}

/// A noise class together with its precision parameter δ ∈ [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel<T> {
    kind: NoiseKind,
    delta: T,
    initial: InitialValueNoise,
}

impl<T: Scalar> NoiseModel<T> {
    pub fn new(kind: NoiseKind, delta: T) -> Result<Self> {
        if !(delta >= T::zero() && delta <= T::one()) {
            return Err(Error::domain(format!("precision parameter must lie in [0, 1], got {delta}")));
        }
        Ok(Self { kind, delta, initial: InitialValueNoise::default() })
    }

    pub fn exact() -> Self {
        Self { kind: NoiseKind::Exact, delta: T::zero(), initial: InitialValueNoise::default() }
    }

    pub fn with_initial(mut self, initial: InitialValueNoise) -> Self {
        self.initial = initial;
        self
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    /// The effective precision parameter; always zero for exact information.
    pub fn delta(&self) -> T {
        match self.kind {
            NoiseKind::Exact => T::zero(),
            _ => self.delta,
        }
    }

    pub fn initial(&self) -> InitialValueNoise {
        self.initial
    }

    fn is_silent(&self) -> bool {
        self.delta() == T::zero()
    }

    /// Upper bound on `‖δ̃(t, x)‖` for this class.
    pub fn bound(&self, x: &[T]) -> T {
        match self.kind {
            NoiseKind::Exact => T::zero(),
            NoiseKind::RelativeEe | NoiseKind::RelativeLipschitzIe => self.delta * (T::one() + one_norm(x)),
            NoiseKind::AbsoluteRk => self.delta,
        }
    }
}

/// Rule producing δ for a given step count: zero, a literal, or `n^-p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaRule {
    Zero,
    Literal(f64),
    Power(f64),
}

impl DeltaRule {
    pub fn value<T: Scalar>(&self, n: usize) -> T {
        match *self {
            DeltaRule::Zero => T::zero(),
            DeltaRule::Literal(v) => T::lit(v),
            DeltaRule::Power(p) => T::from_usize_lossy(n).powf(T::lit(-p)),
        }
    }
}

impl fmt::Display for DeltaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaRule::Zero => f.write_str("0"),
            DeltaRule::Literal(v) => write!(f, "{v}"),
            DeltaRule::Power(p) => write!(f, "n^-{p}"),
        }
    }
}

impl FromStr for DeltaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(exp) = s.strip_prefix("n^-") {
            let p: f64 = exp.parse().map_err(|_| Error::domain(format!("bad exponent in delta rule {s:?}")))?;
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::domain(format!("delta rule exponent must be >= 0, got {s:?}")));
            }
            return Ok(DeltaRule::Power(p));
        }
        let v: f64 = s.parse().map_err(|_| Error::domain(format!("cannot parse delta rule {s:?}")))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("delta must lie in [0, 1], got {v}")));
        }
        Ok(if v == 0.0 { DeltaRule::Zero } else { DeltaRule::Literal(v) })
    }
}

/// One emitted perturbation, kept for post-hoc class checks.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample<T> {
    pub t: T,
    pub x: Vec<T>,
    pub perturbation: Vec<T>,
}

/// Seeded source of noisy information about `(η, f)` for one replication.
///
/// Not shareable across threads: it owns mutable RNG state and a counter.
#[derive(Debug, Clone)]
pub struct NoisyOracle<T> {
    base: IvpSpec<T>,
    model: NoiseModel<T>,
    tau_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    eval_count: u64,
    eta_tilde: Vec<T>,
    ie_factor: T,
    ie_direction: Vec<T>,
    forced_taus: Option<(Vec<T>, usize)>,
    gain: T,
    perturbation: Vec<T>,
    recorded: Option<Vec<NoiseSample<T>>>,
}

/// Builds the oracle of replication `replication_index`. Its random streams
/// depend only on `(master_seed, replication_index)`.
pub fn make_oracle<T: Scalar>(
    p: &IvpSpec<T>,
    m: NoiseModel<T>,
    master_seed: u64,
    replication_index: u64,
) -> Result<NoisyOracle<T>> {
    NoiseModel::new(m.kind, m.delta)?;
    let d = p.dim();
    let tau_rng = stream::tau_stream(master_seed, replication_index);
    let mut noise_rng = stream::noise_stream(master_seed, replication_index);

    let mut eta_tilde = p.eta().to_vec();
    if !m.is_silent() && m.initial == InitialValueNoise::UniformBall {
        let mut offset = vec![T::zero(); d];
        stream::ball_point(&mut noise_rng, m.delta(), &mut offset);
        for (e, o) in eta_tilde.iter_mut().zip(&offset) {
            *e = *e + *o;
        }
    }

    let mut ie_factor = T::zero();
    let mut ie_direction = vec![T::zero(); d];
    if m.kind == NoiseKind::RelativeLipschitzIe && !m.is_silent() {
        ie_factor = stream::symmetric(&mut noise_rng, m.delta());
        if d == 1 {
            ie_direction[0] = T::one();
        } else {
            stream::sphere_direction(&mut noise_rng, &mut ie_direction);
        }
    }

    Ok(NoisyOracle {
        base: p.clone(),
        model: m,
        tau_rng,
        noise_rng,
        eval_count: 0,
        eta_tilde,
        ie_factor,
        ie_direction,
        forced_taus: None,
        gain: T::one(),
        perturbation: vec![T::zero(); d],
        recorded: None,
    })
}

impl<T: Scalar> NoisyOracle<T> {
    pub fn problem(&self) -> &IvpSpec<T> {
        &self.base
    }

    pub fn model(&self) -> &NoiseModel<T> {
        &self.model
    }

    pub fn eta_tilde(&self) -> &[T] {
        &self.eta_tilde
    }

    pub fn eval_count(&self) -> u64 {
        self.eval_count
    }

    /// Perturbation added by the most recent evaluation.
    pub fn last_perturbation(&self) -> &[T] {
        &self.perturbation
    }

    /// Next step offset τ ~ U(0, 1).
    pub fn next_tau(&mut self) -> T {
        if let Some((taus, pos)) = &mut self.forced_taus {
            let tau = taus[*pos % taus.len()];
            *pos += 1;
            return tau;
        }
        stream::open01(&mut self.tau_rng)
    }

    /// Test hook: replace the τ stream by a fixed cyclic sequence.
    pub fn force_taus(&mut self, taus: Vec<T>) {
        assert!(!taus.is_empty(), "forced tau sequence must be nonempty");
        self.forced_taus = Some((taus, 0));
    }

    /// Test hook: scale every emitted perturbation by `gain` while keeping the
    /// declared model, producing noise outside the declared class.
    #[doc(hidden)]
    pub fn amplify_noise(&mut self, gain: T) {
        self.gain = gain;
    }

    /// Start keeping a copy of every `(t, x, δ̃)` triple.
    pub fn record_samples(&mut self) {
        self.recorded = Some(Vec::new());
    }

    pub fn take_samples(&mut self) -> Vec<NoiseSample<T>> {
        self.recorded.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Noisy evaluation `f̃(t, x)`; increments the evaluation counter.
    pub fn noisy_eval(&mut self, t: T, x: &[T]) -> Result<Vec<T>> {
        if !self.base.contains_time(t) {
            return Err(Error::domain(format!("t = {t} outside [{}, {}]", self.base.a(), self.base.b())));
        }
        if x.len() != self.base.dim() {
            return Err(Error::domain(format!("state has dimension {}, expected {}", x.len(), self.base.dim())));
        }
        let mut out = vec![T::zero(); x.len()];
        self.eval_into(t, x, &mut out)?;
        Ok(out)
    }

    /// Allocation-free [`noisy_eval`](Self::noisy_eval) without the range checks.
    #[inline]
    pub fn eval_into(&mut self, t: T, x: &[T], out: &mut [T]) -> Result<()> {
        self.base.eval_into(t, x, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical { step: None, what: format!("f({t}, {x:?}) = {out:?}") });
        }
        self.eval_count += 1;
        if self.model.is_silent() {
            if let Some(rec) = &mut self.recorded {
                rec.push(NoiseSample { t, x: x.to_vec(), perturbation: vec![T::zero(); x.len()] });
            }
            return Ok(());
        }
        self.draw_perturbation(x);
        for (o, p) in out.iter_mut().zip(&self.perturbation) {
            *o = *o + *p;
        }
        debug_assert!(
            self.gain != T::one() || within_bound(one_norm(&self.perturbation), self.model.bound(x)),
            "perturbation {:?} outside the {} class at x = {x:?}",
            self.perturbation,
            self.model.kind
        );
        if let Some(rec) = &mut self.recorded {
            rec.push(NoiseSample { t, x: x.to_vec(), perturbation: self.perturbation.clone() });
        }
        Ok(())
    }

    fn draw_perturbation(&mut self, x: &[T]) {
        let delta = self.model.delta();
        let d = x.len();
        let scale = T::one() + one_norm(x);
        match self.model.kind {
            NoiseKind::Exact => self.perturbation.fill(T::zero()),
            NoiseKind::RelativeEe => {
                if d == 1 {
                    self.perturbation[0] = stream::symmetric(&mut self.noise_rng, delta) * scale;
                } else {
                    let magnitude = delta * stream::open01::<T, _>(&mut self.noise_rng) * scale;
                    stream::sphere_direction(&mut self.noise_rng, &mut self.perturbation);
                    for p in &mut self.perturbation {
                        *p = *p * magnitude;
                    }
                }
            }
            NoiseKind::RelativeLipschitzIe => {
                for (p, u) in self.perturbation.iter_mut().zip(&self.ie_direction) {
                    *p = self.ie_factor * scale * *u;
                }
            }
            NoiseKind::AbsoluteRk => stream::ball_point(&mut self.noise_rng, delta, &mut self.perturbation),
        }
        if self.gain != T::one() {
            for p in &mut self.perturbation {
                *p = *p * self.gain;
            }
        }
    }
}

/// Bound check with a few ulps of slack for the rounding in `r·u`.
fn within_bound<T: Scalar>(value: T, bound: T) -> bool {
    value <= bound * (T::one() + T::lit(16.0) * T::epsilon())
}

/// True iff every sample obeys the model's bound. For the Lipschitz class,
/// every pair of samples taken at the same time is also checked.
pub fn verify_noise_bound<T: Scalar>(m: &NoiseModel<T>, samples: &[NoiseSample<T>]) -> bool {
    let pointwise = samples.iter().all(|s| match m.kind {
        NoiseKind::Exact => s.perturbation.iter().all(|p| *p == T::zero()),
        _ => within_bound(one_norm(&s.perturbation), m.bound(&s.x)),
    });
    if !pointwise || m.kind != NoiseKind::RelativeLipschitzIe {
        return pointwise;
    }
    let delta = m.delta();
    samples.iter().enumerate().all(|(i, s)| {
        samples[i + 1..].iter().filter(|o| o.t == s.t).all(|o| {
            let lhs = one_norm_diff(&s.perturbation, &o.perturbation);
            let rhs = delta * one_norm_diff(&s.x, &o.x);
            // perturbations of size δ(1 + ‖x‖) carry rounding of that order
            lhs <= rhs + T::lit(16.0) * T::epsilon() * delta * (T::one() + one_norm(&s.x) + one_norm(&o.x))
        })
    })
}
