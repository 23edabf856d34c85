//! Statistics of error batches: the order-statistic multiplier ξ̂, empirical
//! tail curves and log-log convergence slopes.

use std::io::{self, Write};

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::analysis::batch::{run_batch, BatchCell, ErrorBatch};
use crate::{Error, Result, Scalar};

/// `ξ̂ = r_{index:N} / denom` with `index = ⌈(1−ε)N⌉` (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileEstimate<T> {
    pub epsilon: f64,
    pub xi_hat: T,
    /// `max{n^{−γ}, δ}`.
    pub denom: T,
    pub index: usize,
    pub order_statistic: T,
}

/// `⌈(1−ε)N⌉`, ignoring the last few ulps of `(1−ε)N` so that for example
/// `ε = 0.05`, `N = 100` gives 95 and not 96.
fn ceiling_index(epsilon: f64, n: usize) -> usize {
    let x = (1.0 - epsilon) * n as f64;
    (x - x * 1e-12).ceil().max(1.0) as usize
}

fn denominator<T: Scalar>(n: usize, gamma: T, delta: T) -> T {
    T::from_usize_lossy(n).powf(-gamma).max(delta)
}

pub fn xi_hat<T: Scalar>(batch: &ErrorBatch<T>, epsilon: f64, gamma: T) -> Result<QuantileEstimate<T>> {
    if batch.is_empty() {
        return Err(Error::domain("cannot estimate a quantile from an empty batch"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let index = ceiling_index(epsilon, batch.len()).min(batch.len());
    let key = batch.key();
    let denom = denominator(key.n, gamma, T::lit(key.delta));
    let order_statistic = batch.errors()[index - 1];
    Ok(QuantileEstimate { epsilon, xi_hat: order_statistic / denom, denom, index, order_statistic })
}

/// Empirical `P(sup-error > ξ·max{h^γ, δ})` on a grid of ξ values.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCurve<T> {
    pub xis: Vec<T>,
    pub probs: Vec<f64>,
    /// 95% Wilson half-widths of `probs`.
    pub half_widths: Vec<f64>,
    pub n_reps: usize,
    pub denom: T,
}

impl<T: Scalar> TailCurve<T> {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "xi,prob,half_width")?;
        for ((x, p), hw) in self.xis.iter().zip(&self.probs).zip(&self.half_widths) {
            writeln!(w, "{x},{p},{hw}")?;
        }
        Ok(())
    }
}

fn z_score(confidence: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + confidence / 2.0)
}

/// Wilson score interval for `successes` out of `trials` at the given
/// two-sided confidence level; returns `(center, half_width)`.
pub fn wilson_interval(successes: usize, trials: usize, confidence: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.5, 0.5);
    }
    let z = z_score(confidence);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let scale = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / scale;
    let half = z / scale * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (center, half)
}

/// Half-width of the 95% Wilson interval.
pub fn wilson_half_width(successes: usize, trials: usize) -> f64 {
    wilson_interval(successes, trials, 0.95).1
}

pub fn tail_curve<T: Scalar>(batch: &ErrorBatch<T>, gamma: T, xi_grid: &[T]) -> Result<TailCurve<T>> {
    if xi_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::domain("xi grid must be sorted ascending"));
    }
    let key = batch.key();
    let denom = T::lit(key.h).powf(gamma).max(T::lit(key.delta));
    let errors = batch.errors();
    let total = errors.len();
    let mut probs = Vec::with_capacity(xi_grid.len());
    let mut half_widths = Vec::with_capacity(xi_grid.len());
    for &xi in xi_grid {
        let threshold = xi * denom;
        let exceed = total - errors.partition_point(|e| *e <= threshold);
        probs.push(if total == 0 { 0.0 } else { exceed as f64 / total as f64 });
        half_widths.push(wilson_half_width(exceed, total));
    }
    Ok(TailCurve { xis: xi_grid.to_vec(), probs, half_widths, n_reps: total, denom })
}

/// Least-squares fit of `log(mean error)` against `log(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% Student-t half-width of the slope (infinite with fewer than three points).
    pub ci_half_width: f64,
    /// `(n, mean error)` pairs.
    pub points: Vec<(f64, f64)>,
}

impl SlopeFit {
    pub fn ci(&self) -> (f64, f64) {
        (self.slope - self.ci_half_width, self.slope + self.ci_half_width)
    }
}

pub fn fit_loglog_slope(ns: &[f64], errors: &[f64]) -> Result<SlopeFit> {
    if ns.len() != errors.len() || ns.len() < 2 {
        return Err(Error::domain("slope fit needs at least two matching points"));
    }
    if ns.iter().chain(errors).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::domain("slope fit needs positive finite values"));
    }
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("slope fit needs at least two distinct n"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ci_half_width = if xs.len() > 2 {
        let dof = k - 2.0;
        let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let se = (rss / dof / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom").inverse_cdf(0.975);
        t * se
    } else {
        f64::INFINITY
    };
    let points = ns.iter().copied().zip(errors.iter().copied()).collect();
    Ok(SlopeFit { slope, intercept, ci_half_width, points })
}

/// Runs one batch per cell and fits the slope of the mean sup-error against
/// `n`. The cells must form a ladder of at least three doubling `n`.
pub fn convergence_slope<T: Scalar>(
    cells: &[BatchCell<T>],
    replications: usize,
    master_seed: u64,
    parallelism: usize,
) -> Result<SlopeFit> {
    if cells.len() < 3 {
        return Err(Error::domain("convergence slope needs at least three ladder points"));
    }
    if cells.windows(2).any(|w| w[1].n != 2 * w[0].n) {
        return Err(Error::domain("ladder points must double n"));
    }
    let mut ns = Vec::with_capacity(cells.len());
    let mut means = Vec::with_capacity(cells.len());
    for cell in cells {
        let batch = run_batch(cell, replications, master_seed, parallelism)?;
        let mean = batch.mean().as_f64();
        if mean <= 0.0 {
            return Err(Error::domain(format!("mean error vanishes at n = {}", cell.n)));
        }
        ns.push(cell.n as f64);
        means.push(mean);
    }
    fit_loglog_slope(&ns, &means)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::analysis::batch::CellKey;
    use crate::analysis::reference::ReferenceSolution;
    use crate::ivp::TestProblem;
    use crate::noise::{DeltaRule, NoiseKind};
    use crate::schemes::SchemeKind;

    fn key(n: usize, delta: f64) -> CellKey {
        CellKey {
            problem: "A".into(),
            scheme: SchemeKind::ExplicitEuler,
            n,
            delta_rule: DeltaRule::Literal(delta),
            delta,
            noise: NoiseKind::RelativeEe,
            h: 1.0 / n as f64,
        }
    }

    fn batch(errors: Vec<f64>, n: usize, delta: f64) -> ErrorBatch<f64> {
        ErrorBatch::new(key(n, delta), errors, 0).unwrap()
    }

    #[test]
    fn order_statistic_index_by_hand() {
        let q = xi_hat(&batch(vec![4.0, 2.0, 1.0, 3.0], 1, 0.0), 0.25, 1.0).unwrap();
        assert_eq!(q.index, 3);
        assert_eq!(q.xi_hat, 3.0);
        assert_eq!(q.denom, 1.0);
        let hundred: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(xi_hat(&batch(hundred.clone(), 1, 0.0), 0.05, 1.0).unwrap().index, 95);
        assert_eq!(xi_hat(&batch(hundred, 1, 0.0), 0.999, 1.0).unwrap().index, 1);
    }

    #[test]
    fn denominator_is_the_larger_of_step_power_and_delta() {
        let b = batch(vec![0.5; 10], 100, 0.0);
        assert!((xi_hat(&b, 0.1, 1.0).unwrap().xi_hat - 50.0).abs() < 1e-12);
        let b = batch(vec![0.5; 10], 100, 0.05);
        assert!((xi_hat(&b, 0.1, 1.0).unwrap().xi_hat - 10.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_domain_errors() {
        let b = batch(vec![1.0], 1, 0.0);
        assert!(xi_hat(&b, 0.0, 1.0).is_err());
        assert!(xi_hat(&b, 1.0, 1.0).is_err());
        assert!(xi_hat(&batch(vec![], 1, 0.0), 0.5, 1.0).is_err());
    }

    #[test]
    fn tail_curve_edges() {
        let b = batch(vec![0.01, 0.02, 0.03, 0.04], 10, 0.0);
        let curve = tail_curve(&b, 1.0, &[0.0, 0.15, 0.25, 1.0]).unwrap();
        assert_eq!(curve.probs, vec![1.0, 0.75, 0.5, 0.0]);
        assert!(curve.half_widths.iter().all(|w| *w > 0.0 && *w < 0.5));
        assert!(tail_curve(&b, 1.0, &[0.2, 0.1]).is_err());
    }

    #[test]
    fn wilson_interval_reference_values() {
        let (c, hw) = wilson_interval(5, 100, 0.95);
        assert!((c - 0.0667).abs() < 5e-4, "{c}");
        assert!((hw - 0.0451).abs() < 5e-4, "{hw}");
        let (c, hw) = wilson_interval(0, 50, 0.95);
        assert!(c - hw <= 1e-15 && c + hw > 0.05);
    }

    #[test]
    fn exact_power_law_has_exact_slope() {
        let ns = [64.0, 128.0, 256.0, 512.0, 1024.0];
        let errs: Vec<f64> = ns.iter().map(|n| 3.7 / n).collect();
        let fit = fit_loglog_slope(&ns, &errs).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!(fit.ci_half_width < 1e-10);
        assert!((fit.intercept - 3.7f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn slope_fit_rejects_degenerate_input() {
        assert!(fit_loglog_slope(&[1.0, 2.0], &[1.0, 0.0]).is_err());
        assert!(fit_loglog_slope(&[2.0, 2.0], &[1.0, 0.5]).is_err());
        assert!(fit_loglog_slope(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn convergence_slope_validates_the_ladder() {
        let reference = Arc::new(ReferenceSolution::problem_a());
        let cell = |n| BatchCell::new(TestProblem::A.spec::<f64>(), reference.clone(), SchemeKind::ExplicitEuler, n);
        assert!(convergence_slope(&[cell(8), cell(16)], 4, 0, 1).is_err());
        assert!(convergence_slope(&[cell(8), cell(16), cell(48)], 4, 0, 1).is_err());
        let fit = convergence_slope(&[cell(32), cell(64), cell(128)], 20, 0, 1).unwrap();
        assert!(fit.slope < -0.7 && fit.slope > -1.3, "{fit:?}");
    }
}
