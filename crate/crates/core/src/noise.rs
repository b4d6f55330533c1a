// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

//! Randomness providers for mechanisms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Source of the coin flips a mechanism uses.
pub trait NoiseSource {
    /// A draw from the open interval (0, 1).
    fn uniform(&mut self) -> f64;

    /// A draw from the zero-centred Laplace distribution with the given scale.
    fn laplace(&mut self, scale: f64) -> f64;

    fn standard_normal(&mut self) -> f64;

    fn gamma(&mut self, shape: f64, scale: f64) -> f64;

    /// Bernoulli(1/2); heads iff the uniform draw lies below one half.
    fn fair_coin(&mut self) -> bool {
        self.uniform() < 0.5
    }
}

impl<N: NoiseSource + ?Sized> NoiseSource for &mut N {
    fn uniform(&mut self) -> f64 {
        (**self).uniform()
    }
    fn laplace(&mut self, scale: f64) -> f64 {
        (**self).laplace(scale)
    }
    fn standard_normal(&mut self) -> f64 {
        (**self).standard_normal()
    }
    fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        (**self).gamma(shape, scale)
    }
}

/// Deterministic pseudo-random stream derived from a 64-bit seed.
#[derive(Debug, Clone)]
pub struct SeededNoise {
    rng: ChaCha12Rng,
}

impl SeededNoise {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// A child stream for trial `index`, independent of the parent's state.
    pub fn derive(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Self { rng }
    }

    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }
}

impl NoiseSource for SeededNoise {
    fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    fn laplace(&mut self, scale: f64) -> f64 {
        let u = self.uniform() - 0.5;
        -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }

    fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        Gamma::new(shape, scale)
            .expect("gamma parameters must be positive")
            .sample(&mut self.rng)
    }
}

/// Test mode: Laplace, Gaussian and Gamma draws are zero; the uniform draw is
/// pinned (0.5 unless set otherwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroNoise {
    uniform: f64,
}

impl ZeroNoise {
    pub fn new() -> Self {
        Self { uniform: 0.5 }
    }

    pub fn with_uniform(u: f64) -> Result<Self> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "pinned uniform must lie in (0, 1), got {u}"
            )));
        }
        Ok(Self { uniform: u })
    }

    /// Pins the coin to heads.
    pub fn heads() -> Self {
        Self { uniform: 0.25 }
    }

    /// Pins the coin to tails.
    pub fn tails() -> Self {
        Self { uniform: 0.75 }
    }
}

impl Default for ZeroNoise {
    fn default() -> Self {
        Self::new()
    }
}

impl NoiseSource for ZeroNoise {
    fn uniform(&mut self) -> f64 {
        self.uniform
    }
    fn laplace(&mut self, _scale: f64) -> f64 {
        0.0
    }
    fn standard_normal(&mut self) -> f64 {
        0.0
    }
    fn gamma(&mut self, _shape: f64, _scale: f64) -> f64 {
        0.0
    }
}

/// Inverse CDF of the zero-centred Laplace distribution.
pub fn laplace_quantile(scale: f64, p: f64) -> Result<f64> {
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("p must lie in (0, 1), got {p}")));
    }
    Ok(if p >= 0.5 {
        -scale * (2.0 * (1.0 - p)).ln()
    } else {
        scale * (2.0 * p).ln()
    })
}
