//! Sup-norm distance between a reference solution and a scheme's
//! piecewise-linear output, sampled at the knots and at equispaced points
//! inside every step.

use crate::analysis::reference::ReferenceSolution;
use crate::ivp::one_norm_diff;
use crate::schemes::Trajectory;
use crate::{Error, Result, Scalar};

/// Each step is split into this many equal parts by default.
pub const DEFAULT_SUBSAMPLES: usize = 8;

/// Reference values precomputed on the sampling grid of an `n`-step run, so a
/// batch evaluates the reference once instead of once per replication.
#[derive(Debug, Clone)]
pub struct ErrorProbe<T> {
    a: T,
    b: T,
    n: usize,
    subsamples: usize,
    dim: usize,
    values: Vec<T>,
}

impl<T: Scalar> ErrorProbe<T> {
    /// Samples at `t_{j-1} + (k / subsamples)·h` for `k = 0..subsamples` in every
    /// step, plus `b`. `subsamples = 1` samples the knots only.
    pub fn new(reference: &ReferenceSolution<T>, a: T, b: T, n: usize, subsamples: usize) -> Result<Self> {
        if subsamples == 0 {
            return Err(Error::domain("subsamples per step must be at least 1"));
        }
        if n == 0 {
            return Err(Error::domain("number of steps must be at least 1"));
        }
        let dim = reference.dim();
        let h = (b - a) / T::from_usize_lossy(n);
        let s = T::from_usize_lossy(subsamples);
        let mut values = vec![T::zero(); (n * subsamples + 1) * dim];
        for j in 0..n {
            let left = a + T::from_usize_lossy(j) * h;
            for k in 0..subsamples {
                let t = left + T::from_usize_lossy(k) / s * h;
                let at = (j * subsamples + k) * dim;
                reference.evaluate(t, &mut values[at..at + dim])?;
            }
        }
        let at = n * subsamples * dim;
        reference.evaluate(b, &mut values[at..at + dim])?;
        Ok(Self { a, b, n, subsamples, dim, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn subsamples(&self) -> usize {
        self.subsamples
    }

    pub fn sup_error(&self, tr: &Trajectory<T>) -> Result<T> {
        let g = tr.grid();
        if g.n() != self.n || g.a() != self.a || g.b() != self.b || tr.dim() != self.dim {
            return Err(Error::domain("trajectory grid does not match the error probe"));
        }
        let d = self.dim;
        let s = T::from_usize_lossy(self.subsamples);
        let nodes = tr.nodes();
        let mut worst = T::zero();
        if d == 1 {
            for j in 0..self.n {
                let (w0, w1) = (nodes[j], nodes[j + 1]);
                let slope = w1 - w0;
                let base = j * self.subsamples;
                for k in 0..self.subsamples {
                    let frac = T::from_usize_lossy(k) / s;
                    let err = (self.values[base + k] - (w0 + slope * frac)).abs();
                    if err > worst {
                        worst = err;
                    }
                }
            }
            worst = worst.max((self.values[self.n * self.subsamples] - nodes[self.n]).abs());
        } else {
            let mut point = vec![T::zero(); d];
            for j in 0..self.n {
                let (w0, w1) = (tr.node(j), tr.node(j + 1));
                for k in 0..self.subsamples {
                    let frac = T::from_usize_lossy(k) / s;
                    for c in 0..d {
                        point[c] = w0[c] + (w1[c] - w0[c]) * frac;
                    }
                    let at = (j * self.subsamples + k) * d;
                    worst = worst.max(one_norm_diff(&self.values[at..at + d], &point));
                }
            }
            let at = self.n * self.subsamples * d;
            worst = worst.max(one_norm_diff(&self.values[at..at + d], tr.node(self.n)));
        }
        if !worst.is_finite() {
            return Err(Error::Numerical { step: None, what: "sup-norm error is not finite".into() });
        }
        Ok(worst)
    }
}

/// `sup_t ‖z(t) − l(t)‖` over the knots and the interior sampling points.
pub fn sup_error<T: Scalar>(tr: &Trajectory<T>, reference: &ReferenceSolution<T>, subsamples_per_step: usize) -> Result<T> {
    let g = tr.grid();
    ErrorProbe::new(reference, g.a(), g.b(), g.n(), subsamples_per_step)?.sup_error(tr)
}
