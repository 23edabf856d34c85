//! Randomized one-step schemes on the uniform grid `t_j = a + jh` with random
//! evaluation points `θ_j = t_{j-1} + τ_j h`, `τ_j ~ U(0, 1)`:
//!
//! * explicit Euler: `W^j = W^{j-1} + h f̃(θ_j, W^{j-1})`
//! * implicit Euler: `U^j = U^{j-1} + h f̃(θ_j, U^j)`, solved by fixed-point iteration
//! * two-stage Runge-Kutta: `V_τ = V^{j-1} + hτ_j f̃(t_{j-1}, V^{j-1})`,
//!   `V^j = V^{j-1} + h f̃(θ_j, V_τ)`
//!
//! Each step draws its own τ_j from the oracle just before its evaluations, so
//! runs that share a seed share the θ_j regardless of the noise model.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use crate::ivp::one_norm_diff;
use crate::noise::{NoiseKind, NoisyOracle};
use crate::stream;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    ExplicitEuler,
    ImplicitEuler,
    RungeKutta2,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::ExplicitEuler => "ee",
            SchemeKind::ImplicitEuler => "ie",
            SchemeKind::RungeKutta2 => "rk",
        }
    }

    /// Noise class the scheme is analysed under.
    pub fn native_noise(self) -> crate::NoiseKind {
        match self {
            SchemeKind::ExplicitEuler => crate::NoiseKind::RelativeEe,
            SchemeKind::ImplicitEuler => crate::NoiseKind::RelativeLipschitzIe,
            SchemeKind::RungeKutta2 => crate::NoiseKind::AbsoluteRk,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ee" => Ok(SchemeKind::ExplicitEuler),
            "ie" => Ok(SchemeKind::ImplicitEuler),
            "rk" => Ok(SchemeKind::RungeKutta2),
            other => Err(Error::domain(format!("unknown scheme {other:?}, expected ee, ie or rk"))),
        }
    }
}

/// Convergence exponent γ: `min(ρ + 1/2, 1)` for both Euler schemes and
/// `ρ + 1/2` for the two-stage Runge-Kutta scheme, with the Hölder exponent
/// capped at 1 (a larger exponent only holds for fields constant in `t`).
pub fn gamma_of<T: Scalar>(s: SchemeKind, rho: T) -> T {
    let half = T::lit(0.5);
    let rho = rho.min(T::one());
    match s {
        SchemeKind::ExplicitEuler | SchemeKind::ImplicitEuler => (rho + half).min(T::one()),
        SchemeKind::RungeKutta2 => rho + half,
    }
}

/// Uniform grid with the step offsets drawn for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    a: T,
    b: T,
    n: usize,
    h: T,
    taus: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    pub(crate) fn new(a: T, b: T, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("number of steps must be at least 1"));
        }
        Ok(Self { a, b, n, h: (b - a) / T::from_usize_lossy(n), taus: Vec::with_capacity(n) })
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn b(&self) -> T {
        self.b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn taus(&self) -> &[T] {
        &self.taus
    }

    /// `t_j`; the last knot is `b` exactly.
    pub fn knot(&self, j: usize) -> T {
        if j == self.n {
            self.b
        } else {
            self.a + T::from_usize_lossy(j) * self.h
        }
    }

    /// `θ_j = t_{j-1} + τ_j h` for `j` in `1..=n`.
    pub fn theta(&self, j: usize) -> T {
        self.knot(j - 1) + self.taus[j - 1] * self.h
    }
}

/// Node values of one scheme run and its piecewise-linear continuous output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    scheme: SchemeKind,
    grid: Grid<T>,
    dim: usize,
    nodes: Vec<T>,
    eval_count: u64,
}

impl<T: Scalar> Trajectory<T> {
    /// Wraps externally computed node values (row-major `(n + 1) × dim`) on the
    /// uniform grid over `[a, b]`. The grid carries no step offsets.
    pub fn from_nodes(scheme: SchemeKind, a: T, b: T, dim: usize, nodes: Vec<T>) -> Result<Self> {
        if dim == 0 || nodes.len() < 2 * dim || !nodes.len().is_multiple_of(dim) {
            return Err(Error::domain(format!("{} node values do not form at least two rows of width {dim}", nodes.len())));
        }
        if !(b > a) {
            return Err(Error::domain("interval must satisfy a < b"));
        }
        let grid = Grid::new(a, b, nodes.len() / dim - 1)?;
        Ok(Self { scheme, grid, dim, nodes, eval_count: 0 })
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval_count(&self) -> u64 {
        self.eval_count
    }

    pub fn node(&self, j: usize) -> &[T] {
        &self.nodes[j * self.dim..(j + 1) * self.dim]
    }

    /// All node values, row-major `(n + 1) × d`.
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// Writes `t,y1,...,yd` rows for every knot.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write_header(&mut w, self.dim)?;
        for j in 0..=self.grid.n {
            write_row(&mut w, self.grid.knot(j), self.node(j))?;
        }
        Ok(())
    }

    /// Writes the interpolant at `points` equispaced times (knots included when they coincide).
    pub fn write_dense_csv<W: Write>(&self, mut w: W, points: usize) -> io::Result<()> {
        write_header(&mut w, self.dim)?;
        let points = points.max(2);
        let span = self.grid.b - self.grid.a;
        for i in 0..points {
            let t = if i + 1 == points {
                self.grid.b
            } else {
                self.grid.a + span * T::from_usize_lossy(i) / T::from_usize_lossy(points - 1)
            };
            let y = interpolate(self, t).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
            write_row(&mut w, t, &y)?;
        }
        Ok(())
    }
}

fn write_header<W: Write>(w: &mut W, dim: usize) -> io::Result<()> {
    write!(w, "t")?;
    for k in 1..=dim {
        write!(w, ",y{k}")?;
    }
    writeln!(w)
}

fn write_row<W: Write, T: Scalar>(w: &mut W, t: T, y: &[T]) -> io::Result<()> {
    write!(w, "{t}")?;
    for v in y {
        write!(w, ",{v}")?;
    }
    writeln!(w)
}

/// Value of the piecewise-linear interpolant through the nodes at `t`.
pub fn interpolate<T: Scalar>(tr: &Trajectory<T>, t: T) -> Result<Vec<T>> {
    let g = &tr.grid;
    if !(t >= g.a && t <= g.b) {
        return Err(Error::domain(format!("t = {t} outside [{}, {}]", g.a, g.b)));
    }
    let raw = ((t - g.a) / g.h).floor().to_usize().unwrap_or(0);
    let j = raw.min(g.n - 1);
    let (left, right) = (g.knot(j), g.knot(j + 1));
    if t == left {
        return Ok(tr.node(j).to_vec());
    }
    if t == right {
        return Ok(tr.node(j + 1).to_vec());
    }
    let frac = (t - left) / g.h;
    Ok(tr.node(j).iter().zip(tr.node(j + 1)).map(|(w0, w1)| *w0 + (*w1 - *w0) * frac).collect())
}

fn step_error(step: usize, err: Error) -> Error {
    match err {
        Error::Numerical { what, .. } => Error::Numerical { step: Some(step), what },
        other => other,
    }
}

fn check_finite<T: Scalar>(step: usize, v: &[T]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical { step: Some(step), what: format!("node value {v:?}") })
    }
}

fn start<T: Scalar>(o: &NoisyOracle<T>, n: usize) -> Result<(Grid<T>, Vec<T>)> {
    let p = o.problem();
    let grid = Grid::new(p.a(), p.b(), n)?;
    let mut nodes = Vec::with_capacity((n + 1) * p.dim());
    nodes.extend_from_slice(o.eta_tilde());
    Ok((grid, nodes))
}

/// Randomized explicit Euler scheme; uses exactly `n` oracle evaluations.
pub fn run_explicit_euler<T: Scalar>(o: &mut NoisyOracle<T>, n: usize) -> Result<Trajectory<T>> {
    let (mut grid, mut nodes) = start(o, n)?;
    let d = o.problem().dim();
    let h = grid.h;
    let before = o.eval_count();
    let mut f = vec![T::zero(); d];
    for j in 1..=n {
        grid.taus.push(o.next_tau());
        let theta = grid.theta(j);
        let prev = (j - 1) * d;
        o.eval_into(theta, &nodes[prev..prev + d], &mut f).map_err(|e| step_error(j, e))?;
        for k in 0..d {
            let next = nodes[prev + k] + h * f[k];
            nodes.push(next);
        }
        check_finite(j, &nodes[j * d..])?;
    }
    Ok(Trajectory { scheme: SchemeKind::ExplicitEuler, grid, dim: d, nodes, eval_count: o.eval_count() - before })
}

/// Randomized two-stage Runge-Kutta scheme; uses exactly `2n` oracle evaluations.
pub fn run_rk2<T: Scalar>(o: &mut NoisyOracle<T>, n: usize) -> Result<Trajectory<T>> {
    let (mut grid, mut nodes) = start(o, n)?;
    let d = o.problem().dim();
    let h = grid.h;
    let before = o.eval_count();
    let mut f = vec![T::zero(); d];
    let mut stage = vec![T::zero(); d];
    for j in 1..=n {
        let tau = o.next_tau();
        grid.taus.push(tau);
        let prev = (j - 1) * d;
        let left = grid.knot(j - 1);
        o.eval_into(left, &nodes[prev..prev + d], &mut f).map_err(|e| step_error(j, e))?;
        for k in 0..d {
            stage[k] = nodes[prev + k] + h * tau * f[k];
        }
        check_finite(j, &stage)?;
        o.eval_into(grid.theta(j), &stage, &mut f).map_err(|e| step_error(j, e))?;
        for k in 0..d {
            let next = nodes[prev + k] + h * f[k];
            nodes.push(next);
        }
        check_finite(j, &nodes[j * d..])?;
    }
    Ok(Trajectory { scheme: SchemeKind::RungeKutta2, grid, dim: d, nodes, eval_count: o.eval_count() - before })
}

/// Stopping rule for the implicit step's fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitOptions<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for ImplicitOptions<T> {
    /// `tol = 1e-12` (raised to `100ε` for types where that is unreachable), `max_iter = 100`.
    fn default() -> Self {
        Self { tol: T::lit(1e-12).max(T::lit(100.0) * T::epsilon()), max_iter: 100 }
    }
}

/// Result of one implicit step.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitStep<T> {
    pub value: Vec<T>,
    pub iterations: usize,
    /// One-norm differences between successive iterates.
    pub diffs: Vec<T>,
}

/// Solves `U = prev + h f̃(θ, U)` by fixed-point iteration started at `prev`.
/// Every iteration is one oracle evaluation.
pub fn implicit_step<T: Scalar>(
    o: &mut NoisyOracle<T>,
    prev: &[T],
    theta: T,
    h: T,
    opts: &ImplicitOptions<T>,
) -> Result<ImplicitStep<T>> {
    let d = prev.len();
    let mut current = prev.to_vec();
    let mut next = vec![T::zero(); d];
    let mut f = vec![T::zero(); d];
    let mut diffs = Vec::new();
    for iteration in 1..=opts.max_iter {
        o.eval_into(theta, &current, &mut f)?;
        for k in 0..d {
            next[k] = prev[k] + h * f[k];
        }
        let diff = one_norm_diff(&next, &current);
        if !diff.is_finite() {
            return Err(Error::Numerical { step: None, what: format!("fixed-point iterate {next:?}") });
        }
        diffs.push(diff);
        std::mem::swap(&mut current, &mut next);
        if diff <= opts.tol {
            return Ok(ImplicitStep { value: current, iterations: iteration, diffs });
        }
    }
    Err(Error::Convergence { step: 0, iterations: opts.max_iter })
}

/// Randomized implicit Euler scheme. Requires exact or `ie` noise and the contraction margin
/// `h(L + δ) < 1`; on success every node satisfies
/// `‖U − U_prev − h f̃(θ, U)‖ ≤ tol·(1 + h(L+δ)) / (1 − h(L+δ))`.
pub fn run_implicit_euler<T: Scalar>(
    o: &mut NoisyOracle<T>,
    n: usize,
    opts: &ImplicitOptions<T>,
) -> Result<Trajectory<T>> {
    if !(opts.tol > T::zero()) {
        return Err(Error::domain(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if !matches!(o.model().kind(), NoiseKind::Exact | NoiseKind::RelativeLipschitzIe) {
        return Err(Error::domain(format!(
            "implicit Euler needs exact or ie noise, got {}: fresh per-call noise has no fixed point",
            o.model().kind()
        )));
    }
    let (mut grid, mut nodes) = start(o, n)?;
    let d = o.problem().dim();
    let h = grid.h;
    let margin = h * (o.problem().class().l + o.model().delta());
    if !(margin < T::one()) {
        return Err(Error::domain(format!("contraction margin h(L + δ) = {margin} must be < 1")));
    }
    let before = o.eval_count();
    for j in 1..=n {
        grid.taus.push(o.next_tau());
        let theta = grid.theta(j);
        let prev = nodes[(j - 1) * d..j * d].to_vec();
        let step = implicit_step(o, &prev, theta, h, opts).map_err(|e| match e {
            Error::Convergence { iterations, .. } => Error::Convergence { step: j, iterations },
            other => step_error(j, other),
        })?;
        nodes.extend_from_slice(&step.value);
        check_finite(j, &step.value)?;
    }
    Ok(Trajectory { scheme: SchemeKind::ImplicitEuler, grid, dim: d, nodes, eval_count: o.eval_count() - before })
}

/// Dispatches on the scheme kind.
pub fn run_scheme<T: Scalar>(
    kind: SchemeKind,
    o: &mut NoisyOracle<T>,
    n: usize,
    implicit: &ImplicitOptions<T>,
) -> Result<Trajectory<T>> {
    match kind {
        SchemeKind::ExplicitEuler => run_explicit_euler(o, n),
        SchemeKind::ImplicitEuler => run_implicit_euler(o, n, implicit),
        SchemeKind::RungeKutta2 => run_rk2(o, n),
    }
}

/// Monte Carlo estimate of the local quadrature errors
/// `E_j(h) = ∫_{t_{j-1}}^{t_j} z'(s) ds − h z'(θ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport<T> {
    pub n: usize,
    pub reps: usize,
    /// Sample mean of `E_j(h)` for `j = 1..=n`.
    pub means: Vec<T>,
    /// Standard error of each mean.
    pub std_errors: Vec<T>,
    /// Largest `|E_j(h)|` seen over all steps and replications.
    pub max_abs: T,
}

impl<T: Scalar> MartingaleReport<T> {
    /// Largest `|mean_j| / se_j` over the steps (zero where the standard error vanishes).
    pub fn max_z_score(&self) -> T {
        self.means
            .iter()
            .zip(&self.std_errors)
            .map(|(m, se)| if *se > T::zero() { m.abs() / *se } else if *m == T::zero() { T::zero() } else { T::infinity() })
            .fold(T::zero(), T::max)
    }
}

/// `solution` is `z` on `[a, b]` and `derivative` is `z'`; the integral of
/// `z'` over a step is taken as the increment of `z`.
pub fn martingale_diagnostic<T: Scalar>(
    a: T,
    b: T,
    solution: &dyn Fn(T) -> T,
    derivative: &dyn Fn(T) -> T,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<MartingaleReport<T>> {
    if reps < 2 {
        return Err(Error::domain("martingale diagnostic needs at least two replications"));
    }
    let grid = Grid::new(a, b, n)?;
    let h = grid.h;
    let increments: Vec<T> = (1..=n).map(|j| solution(grid.knot(j)) - solution(grid.knot(j - 1))).collect();
    let mut sum = vec![T::zero(); n];
    let mut sum_sq = vec![T::zero(); n];
    let mut max_abs = T::zero();
    for rep in 0..reps {
        let mut rng = stream::tau_stream(seed, rep as u64);
        for j in 1..=n {
            let tau: T = stream::open01(&mut rng);
            let theta = grid.knot(j - 1) + tau * h;
            let e = increments[j - 1] - h * derivative(theta);
            sum[j - 1] = sum[j - 1] + e;
            sum_sq[j - 1] = sum_sq[j - 1] + e * e;
            max_abs = max_abs.max(e.abs());
        }
    }
    let count = T::from_usize_lossy(reps);
    let means: Vec<T> = sum.iter().map(|s| *s / count).collect();
    let std_errors = means
        .iter()
        .zip(&sum_sq)
        .map(|(m, sq)| {
            let var = ((*sq - count * *m * *m) / (count - T::one())).max(T::zero());
            (var / count).sqrt()
        })
        .collect();
    Ok(MartingaleReport { n, reps, means, std_errors, max_abs })
}
