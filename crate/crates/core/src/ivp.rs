//! Initial value problems `z' = f(t, z)`, `z(a) = η` on `[a, b]`, the class
//! parameters that describe them, and the two benchmark problems.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::stream;
use crate::{Error, Result, Scalar};

/// Sampling radius used by [`check_class_membership`] when `R` is infinite.
pub const MEMBERSHIP_RADIUS_CAP: f64 = 100.0;

/// Right-hand side `f(t, x)` of an ODE, written into `out`.
pub trait Rhs<T>: Send + Sync {
    fn eval(&self, t: T, x: &[T], out: &mut [T]);
}

impl<T, F> Rhs<T> for F
where
    F: Fn(T, &[T], &mut [T]) + Send + Sync,
{
    fn eval(&self, t: T, x: &[T], out: &mut [T]) {
        self(t, x, out)
    }
}

/// One-norm, the vector norm used for every bound in this crate.
pub fn one_norm<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, v| acc + v.abs())
}

pub(crate) fn one_norm_diff<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (a, b)| acc + (*a - *b).abs())
}

/// Constants of the problem class: growth `K`, Lipschitz/Hölder constant `L`,
/// Hölder exponent `rho` in time and localization radius `R` (may be infinite).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassParams<T> {
    pub k: T,
    pub l: T,
    pub rho: T,
    pub r: T,
}

impl<T: Scalar> ClassParams<T> {
    pub fn new(k: T, l: T, rho: T, r: T) -> Result<Self> {
        if !(k >= T::zero() && k.is_finite()) {
            return Err(Error::domain(format!("growth constant K must be finite and >= 0, got {k}")));
        }
        if !(l >= T::zero() && l.is_finite()) {
            return Err(Error::domain(format!("Lipschitz constant L must be finite and >= 0, got {l}")));
        }
        if !(rho > T::zero() && rho.is_finite()) {
            return Err(Error::domain(format!("Hölder exponent must be > 0, got {rho}")));
        }
        if !(r >= T::zero()) {
            return Err(Error::domain(format!("radius R must lie in [0, inf], got {r}")));
        }
        Ok(Self { k, l, rho, r })
    }
}

/// An initial value problem together with the class parameters the caller
/// claims for it. Parameters are never inferred; see [`check_class_membership`].
#[derive(Clone)]
pub struct IvpSpec<T> {
    name: String,
    a: T,
    b: T,
    eta: Vec<T>,
    rhs: Arc<dyn Rhs<T>>,
    class: ClassParams<T>,
}

impl<T: Scalar> IvpSpec<T> {
    pub fn new(
        name: impl Into<String>,
        a: T,
        b: T,
        eta: Vec<T>,
        rhs: impl Rhs<T> + 'static,
        class: ClassParams<T>,
    ) -> Result<Self> {
        Self::from_arc(name, a, b, eta, Arc::new(rhs), class)
    }

    pub fn from_arc(
        name: impl Into<String>,
        a: T,
        b: T,
        eta: Vec<T>,
        rhs: Arc<dyn Rhs<T>>,
        class: ClassParams<T>,
    ) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::domain(format!("interval must satisfy a < b, got [{a}, {b}]")));
        }
        if eta.is_empty() {
            return Err(Error::domain("state dimension must be at least 1"));
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("initial value must be finite"));
        }
        if one_norm(&eta) > class.k {
            return Err(Error::domain(format!(
                "initial value norm {} exceeds growth constant K = {}",
                one_norm(&eta),
                class.k
            )));
        }
        Ok(Self { name: name.into(), a, b, eta, rhs, class })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn b(&self) -> T {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.eta.len()
    }

    pub fn eta(&self) -> &[T] {
        &self.eta
    }

    pub fn class(&self) -> &ClassParams<T> {
        &self.class
    }

    pub fn with_class(mut self, class: ClassParams<T>) -> Result<Self> {
        if one_norm(&self.eta) > class.k {
            return Err(Error::domain("initial value norm exceeds growth constant K"));
        }
        self.class = class;
        Ok(self)
    }

    pub fn contains_time(&self, t: T) -> bool {
        t >= self.a && t <= self.b
    }

    /// Unchecked evaluation used on the hot paths of the schemes.
    #[inline]
    pub(crate) fn eval_into(&self, t: T, x: &[T], out: &mut [T]) {
        self.rhs.eval(t, x, out)
    }
}

impl<T: fmt::Debug> fmt::Debug for IvpSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IvpSpec")
            .field("name", &self.name)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("eta", &self.eta)
            .field("class", &self.class)
            .finish_non_exhaustive()
    }
}

/// Exact, uncounted evaluation of `f(t, x)`.
pub fn eval_rhs<T: Scalar>(p: &IvpSpec<T>, t: T, x: &[T]) -> Result<Vec<T>> {
    if !p.contains_time(t) {
        return Err(Error::domain(format!("t = {t} outside [{}, {}]", p.a, p.b)));
    }
    if x.len() != p.dim() {
        return Err(Error::domain(format!("state has dimension {}, expected {}", x.len(), p.dim())));
    }
    let mut out = vec![T::zero(); p.dim()];
    p.eval_into(t, x, &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical { step: None, what: format!("f({t}, {x:?}) = {out:?}") });
    }
    Ok(out)
}

/// The two benchmark problems on `[0, 1]` with `z(0) = 1`:
/// `A: z' = 2tz` (solution `exp(t²)`) and `B: z' = cos(z²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestProblem {
    A,
    B,
}

impl TestProblem {
    pub fn name(self) -> &'static str {
        match self {
            TestProblem::A => "A",
            TestProblem::B => "B",
        }
    }

    /// Default class parameters.
    ///
    /// A: `|2tx| <= 2|x|` gives `K = 2` and spatial Lipschitz constant 2 on all of ℝ.
    /// B: `|cos(x²)| <= 1` gives `K = 1`; `R` is the explicit-Euler radius for
    /// `K = 1` and `L = 2(|η| + R)` bounds `|d/dx cos(x²)| = |2x sin(x²)|` on `B(η, R)`.
    /// Both use the time exponent 3/2.
    pub fn class_params<T: Scalar>(self) -> ClassParams<T> {
        let rho = T::lit(1.5);
        match self {
            TestProblem::A => ClassParams { k: T::lit(2.0), l: T::lit(2.0), rho, r: T::infinity() },
            TestProblem::B => {
                let r = radius_ee(T::one(), T::zero(), T::one());
                ClassParams { k: T::one(), l: T::lit(2.0) * (T::one() + r), rho, r }
            }
        }
    }

    pub fn spec<T: Scalar>(self) -> IvpSpec<T> {
        let class = self.class_params();
        let built = match self {
            TestProblem::A => IvpSpec::new(
                "A",
                T::zero(),
                T::one(),
                vec![T::one()],
                |t: T, x: &[T], out: &mut [T]| out[0] = T::lit(2.0) * t * x[0],
                class,
            ),
            TestProblem::B => IvpSpec::new(
                "B",
                T::zero(),
                T::one(),
                vec![T::one()],
                |_t: T, x: &[T], out: &mut [T]| out[0] = (x[0] * x[0]).cos(),
                class,
            ),
        };
        built.expect("benchmark problems are valid")
    }

    pub fn has_analytic_solution(self) -> bool {
        matches!(self, TestProblem::A)
    }
}

impl fmt::Display for TestProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestProblem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(TestProblem::A),
            "B" | "b" => Ok(TestProblem::B),
            other => Err(Error::domain(format!("unknown test problem {other:?}, expected A or B"))),
        }
    }
}

/// `exp(t²)`, the solution of problem A.
pub fn exact_solution_a<T: Scalar>(t: T) -> T {
    (t * t).exp()
}

/// `2t·exp(t²)`.
pub fn exact_derivative_a<T: Scalar>(t: T) -> T {
    T::lit(2.0) * t * (t * t).exp()
}

/// Localization radius required by the explicit Euler analysis.
pub fn radius_ee<T: Scalar>(k: T, a: T, b: T) -> T {
    let len = b - a;
    let one = T::one();
    let first = (k + T::lit(2.0)) * ((k + one) * len).exp() + k - one;
    let second = k * (one + len) * (k * len).exp() + k;
    first.max(second)
}

/// Localization radius required by the two-stage Runge-Kutta analysis.
/// Undefined for `K = 0`.
pub fn radius_rk<T: Scalar>(k: T, a: T, b: T) -> Result<T> {
    if !(k > T::zero()) {
        return Err(Error::domain(format!("radius_rk needs K > 0, got {k}")));
    }
    let len = b - a;
    let one = T::one();
    let kl = k * len;
    let first = k * (one + len) * (one + kl.exp() * (one + kl));
    let second = k
        + len * (one + k)
        + (one / k + one) * (one + kl) * ((kl * (one + kl)).exp() * (one + k) - one);
    Ok(first.max(second))
}

/// Which class condition a sampled point violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    InitialBound,
    Growth,
    TimeHolder,
    Lipschitz,
}

#[derive(Debug, Clone)]
pub struct Violation<T> {
    pub condition: Condition,
    pub t: T,
    pub x: Vec<T>,
    pub ratio: T,
}

/// Largest ratios observed while sampling the class conditions. A pass is
/// evidence only: no violation was found among the samples.
#[derive(Debug, Clone)]
pub struct MembershipReport<T> {
    pub samples: usize,
    pub sampling_radius: T,
    pub initial_norm: T,
    pub growth_ratio: T,
    pub time_holder_ratio: T,
    pub lipschitz_ratio: T,
    pub violations: Vec<Violation<T>>,
}

impl<T> MembershipReport<T> {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples `(t, x)` on `[a, b] × B(η, min(R, 100))` and records the largest
/// ratios for the growth bound, the time-Hölder bound and the spatial
/// Lipschitz bound, keeping the first witness for every violated condition.
pub fn check_class_membership<T: Scalar>(p: &IvpSpec<T>, sample_count: usize, rng_seed: u64) -> MembershipReport<T> {
    check_claimed_class(p, &p.class, sample_count, rng_seed)
}

/// [`check_class_membership`] against parameters other than the ones stored in
/// the problem, e.g. a tighter claim that the problem itself would reject.
pub fn check_claimed_class<T: Scalar>(
    p: &IvpSpec<T>,
    claimed: &ClassParams<T>,
    sample_count: usize,
    rng_seed: u64,
) -> MembershipReport<T> {
    let class = *claimed;
    let radius = class.r.min(T::lit(MEMBERSHIP_RADIUS_CAP));
    let d = p.dim();
    let mut rng = stream::stream(rng_seed, 0, 3);
    let mut violations: Vec<Violation<T>> = Vec::new();
    let record = |v: Violation<T>, violations: &mut Vec<Violation<T>>| {
        if !violations.iter().any(|w| w.condition == v.condition) {
            violations.push(v);
        }
    };

    let initial_norm = one_norm(&p.eta);
    if initial_norm > class.k {
        record(
            Violation { condition: Condition::InitialBound, t: p.a, x: p.eta.clone(), ratio: initial_norm },
            &mut violations,
        );
    }

    let draw_point = |rng: &mut rand_chacha::ChaCha8Rng, x: &mut [T]| {
        stream::ball_point(rng, radius, x);
        for (xi, ei) in x.iter_mut().zip(&p.eta) {
            *xi = *xi + *ei;
        }
    };
    let draw_time = |rng: &mut rand_chacha::ChaCha8Rng| p.a + (p.b - p.a) * stream::open01::<T, _>(rng);

    let mut x = vec![T::zero(); d];
    let mut y = vec![T::zero(); d];
    let mut fx = vec![T::zero(); d];
    let mut fy = vec![T::zero(); d];
    let (mut growth, mut holder, mut lipschitz) = (T::zero(), T::zero(), T::zero());

    for _ in 0..sample_count.max(1) {
        // (A2) growth
        let t = draw_time(&mut rng);
        draw_point(&mut rng, &mut x);
        p.eval_into(t, &x, &mut fx);
        let ratio = one_norm(&fx) / (T::one() + one_norm(&x));
        growth = growth.max(ratio);
        if ratio > class.k {
            record(Violation { condition: Condition::Growth, t, x: x.clone(), ratio }, &mut violations);
        }

        // (A3) Hölder continuity in time
        let s = draw_time(&mut rng);
        if s != t {
            p.eval_into(s, &x, &mut fy);
            let ratio = one_norm_diff(&fx, &fy) / (t - s).abs().powf(class.rho);
            holder = holder.max(ratio);
            if ratio > class.l {
                record(Violation { condition: Condition::TimeHolder, t, x: x.clone(), ratio }, &mut violations);
            }
        }

        // (A4) Lipschitz continuity in state
        draw_point(&mut rng, &mut y);
        let dist = one_norm_diff(&x, &y);
        if dist > T::zero() {
            p.eval_into(t, &y, &mut fy);
            let ratio = one_norm_diff(&fx, &fy) / dist;
            lipschitz = lipschitz.max(ratio);
            if ratio > class.l {
                record(Violation { condition: Condition::Lipschitz, t, x: x.clone(), ratio }, &mut violations);
            }
        }
    }

    MembershipReport {
        samples: sample_count.max(1),
        sampling_radius: radius,
        initial_norm,
        growth_ratio: growth,
        time_holder_ratio: holder,
        lipschitz_ratio: lipschitz,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::E;

    #[test]
    fn rhs_examples() {
        let a = TestProblem::A.spec::<f64>();
        let b = TestProblem::B.spec::<f64>();
        assert_eq!(eval_rhs(&a, 0.5, &[2.0]).unwrap(), vec![2.0]);
        assert_eq!(eval_rhs(&b, 0.3, &[0.0]).unwrap(), vec![1.0]);
        assert_abs_diff_eq!(eval_rhs(&a, 1.0, &[E]).unwrap()[0], 2.0 * E, epsilon = 1e-15);
        assert_abs_diff_eq!(eval_rhs(&a, 1.0, &[E]).unwrap()[0], 5.43656, epsilon = 1e-5);
    }

    #[test]
    fn rhs_rejects_time_outside_interval_and_non_finite_output() {
        let a = TestProblem::A.spec::<f64>();
        assert!(matches!(eval_rhs(&a, 1.5, &[1.0]), Err(Error::Domain(_))));
        assert!(matches!(eval_rhs(&a, 0.5, &[f64::INFINITY]), Err(Error::Numerical { .. })));
    }

    #[test]
    fn exact_solution_values() {
        assert_eq!(exact_solution_a(0.0f64), 1.0);
        assert_abs_diff_eq!(exact_solution_a(1.0f64), std::f64::consts::E, epsilon = 1e-15);
        assert_abs_diff_eq!(exact_solution_a(0.5f64), 1.284025, epsilon = 1e-6);
    }

    #[test]
    fn exact_solution_satisfies_the_ode() {
        let h = 1e-6;
        for i in 0..=100 {
            let t = 0.01 * i as f64;
            let (lo, hi) = ((t - h).max(0.0), (t + h).min(1.0));
            let fd = (exact_solution_a(hi) - exact_solution_a(lo)) / (hi - lo);
            // forward/backward differences at the ends carry an O(h) term
            let tol = if i == 0 || i == 100 { 1e-5 } else { 1e-8 };
            assert!((fd - 2.0 * t * exact_solution_a(t)).abs() <= tol, "t = {t}");
            assert!((exact_derivative_a(t) - 2.0 * t * exact_solution_a(t)).abs() <= 1e-10);
        }
    }

    #[test]
    fn radius_ee_examples() {
        assert_abs_diff_eq!(radius_ee(0.0, 0.0, 1.0), 2.0 * E - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(radius_ee(0.0f64, 0.0, 1.0), 4.43656, epsilon = 1e-5);
        let expected = (4.0 * E.powi(3) + 1.0).max(4.0 * E * E + 2.0);
        assert_abs_diff_eq!(radius_ee(2.0, 0.0, 1.0), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(radius_ee(2.0f64, 0.0, 1.0), 81.342, epsilon = 1e-3);
        assert_eq!(radius_ee(1.0, 0.0, 0.0), 3.0);
    }

    #[test]
    fn radius_rk_examples() {
        let expected = (2.0 + 4.0 * E).max(3.0 + 4.0 * (2.0 * E * E - 1.0));
        assert_abs_diff_eq!(radius_rk(1.0, 0.0, 1.0).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(radius_rk(1.0f64, 0.0, 1.0).unwrap(), 58.11, epsilon = 1e-2);
        assert_abs_diff_eq!(radius_rk(1.0, 0.0, 0.0).unwrap(), 3.0, epsilon = 1e-15);
        // K = 2: first = 2·2·(1 + e²·3), second = 2 + 3 + 1.5·3·(e⁶·3 − 1)
        let first = 4.0 * (1.0 + 3.0 * E.powi(2));
        let second = 5.0 + 4.5 * (3.0 * E.powi(6) - 1.0);
        assert_abs_diff_eq!(radius_rk(2.0, 0.0, 1.0).unwrap(), first.max(second), epsilon = 1e-9);
        assert!(matches!(radius_rk(0.0, 0.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn radii_are_monotone() {
        let ks = [0.1, 0.5, 1.0, 2.0, 3.0];
        let lens = [0.0, 0.25, 0.5, 1.0, 2.0];
        for w in ks.windows(2) {
            for &len in &lens {
                assert!(radius_ee(w[0], 0.0, len) <= radius_ee(w[1], 0.0, len));
                assert!(radius_rk(w[0], 0.0, len).unwrap() <= radius_rk(w[1], 0.0, len).unwrap());
            }
        }
        for w in lens.windows(2) {
            for &k in &ks {
                assert!(radius_ee(k, 0.0, w[0]) <= radius_ee(k, 0.0, w[1]));
                assert!(radius_rk(k, 0.0, w[0]).unwrap() <= radius_rk(k, 0.0, w[1]).unwrap());
            }
        }
    }

    #[test]
    fn problem_a_passes_membership_with_observed_holder_constant() {
        let a = TestProblem::A.spec::<f64>();
        let probe = check_class_membership(&a, 20_000, 9);
        assert!(probe.growth_ratio <= 2.0);
        assert!(probe.lipschitz_ratio <= 2.0 + 1e-12);
        // Time-Hölder ratios of 2tx for exponent 3/2 are unbounded as |t − s| → 0,
        // so L has to be chosen from the sampled evidence.
        let class = ClassParams::new(2.0, probe.time_holder_ratio.max(2.0), 1.5, f64::INFINITY).unwrap();
        let report = check_class_membership(&a.with_class(class).unwrap(), 20_000, 9);
        assert!(report.passed(), "{:?}", report.violations);
    }

    #[test]
    fn problem_b_passes_membership_with_defaults() {
        let b = TestProblem::B.spec::<f64>();
        let report = check_class_membership(&b, 20_000, 4);
        assert!(report.passed(), "{:?}", report.violations);
        assert!(report.growth_ratio <= 1.0);
        assert_eq!(report.time_holder_ratio, 0.0);
    }

    #[test]
    fn understated_growth_constant_is_caught() {
        let a = TestProblem::A.spec::<f64>();
        let claimed = ClassParams::new(0.1, 1e9, 1.5, f64::INFINITY).unwrap();
        let report = check_claimed_class(&a, &claimed, 5_000, 1);
        assert!(!report.passed());
        let witness = report.violations.iter().find(|v| v.condition == Condition::Growth).unwrap();
        assert!(witness.ratio > 0.1);
        let recomputed = eval_rhs(&a, witness.t, &witness.x).unwrap()[0].abs() / (1.0 + witness.x[0].abs());
        assert!((recomputed - witness.ratio).abs() < 1e-12);
        assert!(report.violations.iter().any(|v| v.condition == Condition::InitialBound));
    }

    #[test]
    fn spec_validation() {
        let class = ClassParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let zero = |_t: f64, _x: &[f64], o: &mut [f64]| o.fill(0.0);
        assert!(IvpSpec::new("bad", 1.0, 1.0, vec![0.0], zero, class).is_err());
        assert!(IvpSpec::new("bad", 0.0, 1.0, vec![], zero, class).is_err());
        assert!(IvpSpec::new("bad", 0.0, 1.0, vec![2.0], zero, class).is_err());
        assert!(ClassParams::new(-1.0, 0.0, 1.0, 0.0).is_err());
        assert!(ClassParams::new(1.0, 0.0, 0.0, 0.0).is_err());
        assert!("C".parse::<TestProblem>().is_err());
        assert_eq!("B".parse::<TestProblem>().unwrap(), TestProblem::B);
    }
}
