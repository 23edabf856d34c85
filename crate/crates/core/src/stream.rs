//! Seeded random streams and the uniform samplers built on them.
//!
//! Every replication owns two ChaCha8 streams derived from
//! `(master_seed, replication_index)`: one feeds the step offsets τ_j, the other
//! feeds noise and the perturbed initial value. Keeping them apart means an
//! exact-information run and a noisy run with the same seed see identical
//! evaluation points.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

const TAU_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

pub(crate) fn stream(master_seed: u64, replication_index: u64, purpose: u64) -> ChaCha8Rng {
    assert!(replication_index < (1 << 62), "replication index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((replication_index << 2) | purpose);
    rng
}

pub(crate) fn tau_stream(master_seed: u64, replication_index: u64) -> ChaCha8Rng {
    stream(master_seed, replication_index, TAU_STREAM)
}

pub(crate) fn noise_stream(master_seed: u64, replication_index: u64) -> ChaCha8Rng {
    stream(master_seed, replication_index, NOISE_STREAM)
}

/// Draw from the open interval (0, 1).
pub(crate) fn open01<T: Scalar, R: Rng>(rng: &mut R) -> T {
    let u: f64 = rng.sample(Open01);
    T::lit(u)
}

/// Draw from U[-radius, radius].
pub(crate) fn symmetric<T: Scalar, R: Rng>(rng: &mut R, radius: T) -> T {
    let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
    radius * T::lit(u)
}

fn exponential<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -u.ln()
}

/// Uniform direction on the unit sphere of the one-norm.
pub(crate) fn sphere_direction<T: Scalar, R: Rng>(rng: &mut R, out: &mut [T]) {
    if out.len() == 1 {
        out[0] = if rng.random::<bool>() { T::one() } else { -T::one() };
        return;
    }
    let mut weights: Vec<f64> = (0..out.len()).map(|_| exponential(rng)).collect();
    let total: f64 = weights.iter().sum();
    for (o, w) in out.iter_mut().zip(weights.iter_mut()) {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        *o = T::lit(sign * *w / total);
    }
}

/// Uniform point in the one-norm ball of the given radius centred at zero.
pub(crate) fn ball_point<T: Scalar, R: Rng>(rng: &mut R, radius: T, out: &mut [T]) {
    if out.len() == 1 {
        out[0] = symmetric(rng, radius);
        return;
    }
    // Dropping one coordinate of a flat Dirichlet(1, ..., 1) sample in d + 1
    // dimensions gives a uniform point of the simplex {w >= 0, sum w <= 1}.
    let weights: Vec<f64> = (0..=out.len()).map(|_| exponential(rng)).collect();
    let total: f64 = weights.iter().sum();
    for (o, w) in out.iter_mut().zip(&weights) {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        *o = radius * T::lit(sign * w / total);
    }
}
