//! Reference solutions the sup-norm errors are measured against: closed-form
//! solutions, or a dense deterministic RK4 solution cached on disk.
//!
//! Cache layout (little endian):
//!
//! ```text
//! magic  "RODEREF1"                 8 bytes
//! header length                     u32
//! header "key=value;..." (utf-8)    problem, method, n_ref, dim, a, b
//! sha256 of the payload             32 bytes
//! payload                           (n_ref + 1) · dim f64 values, row-major
//! ```

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::ivp::{exact_solution_a, IvpSpec, TestProblem};
use crate::{Error, Result, Scalar};

const MAGIC: &[u8; 8] = b"RODEREF1";
/// Smallest step count accepted for the cached reference of problem B.
pub const MIN_REFERENCE_STEPS: usize = 100_000;
/// Step count of the default problem-B reference.
pub const DEFAULT_REFERENCE_STEPS: usize = 2_000_000;

/// Provenance of a dense reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceMeta {
    pub problem: String,
    pub method: String,
    pub n_ref: usize,
    pub checksum: String,
}

type Evaluator<T> = Arc<dyn Fn(T, &mut [T]) + Send + Sync>;

#[derive(Clone)]
enum Kind<T> {
    Analytic(Evaluator<T>),
    CachedDense { values: Vec<T>, h: T, n_ref: usize, meta: ReferenceMeta },
}

/// A function `t ↦ z(t)` on `[a, b]`.
#[derive(Clone)]
pub struct ReferenceSolution<T> {
    a: T,
    b: T,
    dim: usize,
    kind: Kind<T>,
}

impl<T: fmt::Debug> fmt::Debug for ReferenceSolution<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            Kind::Analytic(_) => "analytic".to_string(),
            Kind::CachedDense { meta, .. } => format!("dense {meta:?}"),
        };
        f.debug_struct("ReferenceSolution")
            .field("a", &self.a)
            .field("b", &self.b)
            .field("dim", &self.dim)
            .field("kind", &kind)
            .finish()
    }
}

impl<T: Scalar> ReferenceSolution<T> {
    pub fn analytic(a: T, b: T, dim: usize, eval: impl Fn(T, &mut [T]) + Send + Sync + 'static) -> Self {
        Self { a, b, dim, kind: Kind::Analytic(Arc::new(eval)) }
    }

    /// `exp(t²)` on `[0, 1]`.
    pub fn problem_a() -> Self {
        Self::analytic(T::zero(), T::one(), 1, |t, out| out[0] = exact_solution_a(t))
    }

    /// Dense values on a uniform grid of `n_ref` steps, linearly interpolated.
    pub fn dense(a: T, b: T, dim: usize, values: Vec<T>, meta: ReferenceMeta) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) || values.len() / dim < 2 {
            return Err(Error::domain("dense reference needs at least two rows of values"));
        }
        let n_ref = values.len() / dim - 1;
        let h = (b - a) / T::from_usize_lossy(n_ref);
        Ok(Self { a, b, dim, kind: Kind::CachedDense { values, h, n_ref, meta } })
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn b(&self) -> T {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.kind, Kind::Analytic(_))
    }

    pub fn meta(&self) -> Option<&ReferenceMeta> {
        match &self.kind {
            Kind::CachedDense { meta, .. } => Some(meta),
            Kind::Analytic(_) => None,
        }
    }

    /// Writes `z(t)` into `out`.
    pub fn evaluate(&self, t: T, out: &mut [T]) -> Result<()> {
        if !(t >= self.a && t <= self.b) || out.len() != self.dim {
            return Err(Error::Reference { t: t.to_f64().unwrap_or(f64::NAN) });
        }
        match &self.kind {
            Kind::Analytic(f) => f(t, out),
            Kind::CachedDense { values, h, n_ref, .. } => {
                let pos = (t - self.a) / *h;
                let j = pos.floor().to_usize().unwrap_or(0).min(*n_ref - 1);
                let frac = pos - T::from_usize_lossy(j);
                let d = self.dim;
                for k in 0..d {
                    let (v0, v1) = (values[j * d + k], values[(j + 1) * d + k]);
                    out[k] = v0 + (v1 - v0) * frac;
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Reference { t: t.to_f64().unwrap_or(f64::NAN) });
        }
        Ok(())
    }

    pub fn value(&self, t: T) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.dim];
        self.evaluate(t, &mut out)?;
        Ok(out)
    }
}

/// Classical fourth-order Runge-Kutta on `n_ref` uniform steps; returns the
/// `(n_ref + 1) · d` node values.
pub fn dense_rk4_reference(p: &IvpSpec<f64>, n_ref: usize) -> Result<Vec<f64>> {
    if n_ref == 0 {
        return Err(Error::domain("reference needs at least one step"));
    }
    let d = p.dim();
    let h = (p.b() - p.a()) / n_ref as f64;
    let mut values = Vec::with_capacity((n_ref + 1) * d);
    values.extend_from_slice(p.eta());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    let mut y = p.eta().to_vec();
    for j in 0..n_ref {
        let t = p.a() + j as f64 * h;
        p.eval_into(t, &y, &mut k1);
        for k in 0..d {
            tmp[k] = y[k] + 0.5 * h * k1[k];
        }
        p.eval_into(t + 0.5 * h, &tmp, &mut k2);
        for k in 0..d {
            tmp[k] = y[k] + 0.5 * h * k2[k];
        }
        p.eval_into(t + 0.5 * h, &tmp, &mut k3);
        for k in 0..d {
            tmp[k] = y[k] + h * k3[k];
        }
        p.eval_into(t + h, &tmp, &mut k4);
        for k in 0..d {
            y[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical { step: Some(j + 1), what: format!("reference value {y:?}") });
        }
        values.extend_from_slice(&y);
    }
    Ok(values)
}

fn header(problem: &str, n_ref: usize, dim: usize, a: f64, b: f64) -> String {
    format!("problem={problem};method=rk4;n_ref={n_ref};dim={dim};a={a};b={b}")
}

fn payload_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn encode(header: &str, values: &[f64]) -> Vec<u8> {
    let payload = payload_bytes(values);
    let digest = Sha256::digest(&payload);
    let mut out = Vec::with_capacity(8 + 4 + header.len() + 32 + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&digest);
    out.extend_from_slice(&payload);
    out
}

/// Parses a cache file; `None` when the header differs or the checksum fails.
fn decode(bytes: &[u8], expected_header: &str) -> Option<(Vec<f64>, String)> {
    let rest = bytes.strip_prefix(MAGIC.as_slice())?;
    let len = u32::from_le_bytes(rest.get(..4)?.try_into().ok()?) as usize;
    let header = std::str::from_utf8(rest.get(4..4 + len)?).ok()?;
    if header != expected_header {
        return None;
    }
    let digest = rest.get(4 + len..4 + len + 32)?;
    let payload = rest.get(4 + len + 32..)?;
    if Sha256::digest(payload).as_slice() != digest || payload.len() % 8 != 0 {
        return None;
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Some((values, hex(digest)))
}

/// Dense RK4 reference for problem B with `n_ref` steps, loaded from
/// `cache_path` when a valid cache with the same parameters exists and
/// (re)computed and written otherwise.
pub fn build_reference_b<T: Scalar>(n_ref: usize, cache_path: &Path) -> Result<ReferenceSolution<T>> {
    if n_ref < MIN_REFERENCE_STEPS {
        return Err(Error::domain(format!("reference needs at least {MIN_REFERENCE_STEPS} steps, got {n_ref}")));
    }
    let problem = TestProblem::B.spec::<f64>();
    let head = header("B", n_ref, problem.dim(), problem.a(), problem.b());

    let cached = fs::read(cache_path).ok().and_then(|bytes| decode(&bytes, &head));
    let (values, checksum) = match cached {
        Some(found) if found.0.len() == (n_ref + 1) * problem.dim() => found,
        _ => {
            let values = dense_rk4_reference(&problem, n_ref)?;
            let bytes = encode(&head, &values);
            if let Some(parent) = cache_path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let tmp = cache_path.with_extension("tmp");
            fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
            fs::rename(&tmp, cache_path).map_err(|e| Error::io(cache_path, e))?;
            let checksum = hex(&Sha256::digest(payload_bytes(&values)));
            (values, checksum)
        }
    };
    let meta = ReferenceMeta { problem: "B".into(), method: "rk4".into(), n_ref, checksum };
    let converted = values.into_iter().map(T::lit).collect();
    ReferenceSolution::dense(T::lit(problem.a()), T::lit(problem.b()), problem.dim(), converted, meta)
}
