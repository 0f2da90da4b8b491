//! Reproducible random streams and the samplers built on them.
//!
//! Every stream is a ChaCha8 keystream keyed by a 64-bit seed and positioned on
//! one of 2^64 independent stream ids. Output depends only on `(seed,
//! stream_id)` and the number of draws taken, so the base station and every
//! user can replay the same beam draws without exchanging messages.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn fork(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn index_below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Circularly-symmetric complex Gaussian: each component has variance
    /// `variance / 2`.
    pub fn complex_gaussian(&mut self, mean: Complex64, variance: f64) -> Result<Complex64> {
        if !(variance >= 0.0) {
            return Err(Error::NegativeVariance(variance));
        }
        let re = self.standard_normal();
        let im = self.standard_normal();
        if variance == 0.0 {
            return Ok(mean);
        }
        let s = (variance / 2.0).sqrt();
        Ok(mean + Complex64::new(re * s, im * s))
    }

    pub fn poisson(&mut self, lambda: f64) -> Result<u64> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::NegativeRate(lambda));
        }
        if lambda == 0.0 {
            return Ok(0);
        }
        let dist = Poisson::new(lambda).map_err(|_| Error::NegativeRate(lambda))?;
        Ok(dist.sample(&mut self.inner) as u64)
    }

    /// Sequential weighted draws without replacement: pick `i` with
    /// probability `w_i / sum(w)`, zero its weight, repeat `k` times. Returns
    /// indices in draw order. Weights need not be normalized.
    pub fn weighted_sample_without_replacement(&mut self, weights: &[f64], k: usize) -> Result<Vec<usize>> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidWeights);
        }
        let positive = weights.iter().filter(|&&w| w > 0.0).count();
        if positive < k {
            return Err(Error::InsufficientSupport { positive, k });
        }
        let mut w = weights.to_vec();
        let mut picked = Vec::with_capacity(k);
        for _ in 0..k {
            let total: f64 = w.iter().sum();
            let target = self.uniform() * total;
            let mut acc = 0.0;
            // Fall back to the last positive weight if rounding leaves
            // `target` past the final partial sum.
            let mut choice = None;
            for (i, &wi) in w.iter().enumerate() {
                if wi <= 0.0 {
                    continue;
                }
                acc += wi;
                choice = Some(i);
                if target < acc {
                    break;
                }
            }
            let i = choice.expect("positive weight available");
            picked.push(i);
            w[i] = 0.0;
        }
        Ok(picked)
    }
}

/// SplitMix64 finalizer, used to derive well-spread stream ids.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a stream is used for inside one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamRole {
    Channel,
    Geometry,
    BsBeams,
    UeBeams,
    Noise,
    Scheduler,
}

impl StreamRole {
    fn tag(self) -> u64 {
        match self {
            StreamRole::Channel => 1,
            StreamRole::Geometry => 2,
            StreamRole::BsBeams => 3,
            StreamRole::UeBeams => 4,
            StreamRole::Noise => 5,
            StreamRole::Scheduler => 6,
        }
    }
}

/// Stream id for `(trial, role, entity)`; `entity` is a user index or 0.
pub fn stream_id(trial: u64, role: StreamRole, entity: u64) -> u64 {
    mix64(mix64(mix64(trial) ^ role.tag()) ^ entity)
}
