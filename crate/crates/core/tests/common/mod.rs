// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

//! Brute-force oracles and random inputs shared by the integration tests.

#![allow(dead_code)]

use odp::iterative::{OptDeltaSpec, StopSchedule};
use odp::{DpGuarantee, NoiseSource, SeededNoise};

/// Randomized-response probabilities, written out from the table:
/// input 0 gives `(δ, (1-δ)e^ε/(1+e^ε), (1-δ)/(1+e^ε), 0)` and input 1 the
/// mirror image.
pub fn rr_table(eps: f64, delta: f64, b: bool) -> [f64; 4] {
    let p_hi = (1.0 - delta) / (1.0 + (-eps).exp());
    let p_lo = (1.0 - delta) - p_hi;
    if b {
        [0.0, p_lo, p_hi, delta]
    } else {
        [delta, p_hi, p_lo, 0.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallSpec {
    pub stops: Vec<usize>,
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
    pub targets: Vec<f64>,
}

impl SmallSpec {
    pub fn to_spec(&self) -> OptDeltaSpec {
        OptDeltaSpec::new(
            StopSchedule::new(self.stops.clone()).unwrap(),
            self.eps
                .iter()
                .zip(&self.delta)
                .map(|(&e, &d)| DpGuarantee::new(e, d).unwrap())
                .collect(),
            self.targets.clone(),
        )
        .unwrap()
    }

    fn prob(&self, seq: &[usize], b: bool) -> f64 {
        seq.iter()
            .enumerate()
            .map(|(t, &o)| rr_table(self.eps[t], self.delta[t], b)[o])
            .product()
    }

    /// `Pr₀(q) - e^{target} Pr₁(q)` for every sequence of the stop's length,
    /// indexed in base 4 with the first symbol most significant.
    fn weights(&self, level: usize) -> Vec<f64> {
        let k = self.stops[level];
        let factor = self.targets[level].exp();
        (0..4usize.pow(k as u32))
            .map(|code| {
                let seq: Vec<usize> = (0..k)
                    .map(|pos| (code / 4usize.pow((k - 1 - pos) as u32)) % 4)
                    .collect();
                self.prob(&seq, false) - factor * self.prob(&seq, true)
            })
            .collect()
    }
}

/// `sums[mask]` = total weight of the members of `mask`.
fn subset_sums(w: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; 1 << w.len()];
    for mask in 1usize..sums.len() {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + w[low];
    }
    sums
}

/// Maximum of `Σ_i Σ_{q ∈ Q_i} w_i(q)` over all families of output sets in
/// which no chosen sequence is a prefix of another chosen sequence, found by
/// enumerating every family. Supports final stops up to 2.
pub fn antichain_opt_delta(spec: &SmallSpec) -> f64 {
    match spec.stops.as_slice() {
        [_] => subset_sums(&spec.weights(0))
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max),
        [1, 2] => {
            let first = subset_sums(&spec.weights(0));
            let second = subset_sums(&spec.weights(1));
            let mut best = f64::NEG_INFINITY;
            for (m1, &v1) in first.iter().enumerate() {
                // a chosen first symbol rules out all four of its extensions
                let blocked: usize = (0..4).filter(|a| m1 & (1 << a) != 0).map(|a| 0xF << (4 * a)).sum();
                for (m2, &v2) in second.iter().enumerate() {
                    if m2 & blocked == 0 {
                        best = best.max(v1 + v2);
                    }
                }
            }
            best
        }
        other => panic!("oracle supports final stop <= 2, got {other:?}"),
    }
}

/// Level-wise maxima without the prefix constraint, by enumeration.
pub fn unconstrained_delta(spec: &SmallSpec) -> f64 {
    (0..spec.stops.len())
        .map(|i| {
            subset_sums(&spec.weights(i))
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

pub fn uniform_in(noise: &mut SeededNoise, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * noise.uniform()
}

pub fn pick(noise: &mut SeededNoise, n: usize) -> usize {
    ((noise.uniform() * n as f64) as usize).min(n - 1)
}

/// Random spec with final stop at most 2. Some deltas are zero and some
/// targets sit on the simple-composition value.
pub fn random_small_spec(noise: &mut SeededNoise) -> SmallSpec {
    let stops = match pick(noise, 3) {
        0 => vec![1],
        1 => vec![2],
        _ => vec![1, 2],
    };
    let k = *stops.last().unwrap();
    let eps: Vec<f64> = (0..k).map(|_| uniform_in(noise, 0.0, 2.0)).collect();
    let delta: Vec<f64> = (0..k)
        .map(|_| {
            if noise.uniform() < 0.25 {
                0.0
            } else {
                uniform_in(noise, 0.0, 0.3)
            }
        })
        .collect();
    let targets = stops
        .iter()
        .map(|&s| {
            let simple: f64 = eps[..s].iter().sum();
            if noise.uniform() < 0.2 {
                simple
            } else {
                uniform_in(noise, 0.0, simple + 0.5)
            }
        })
        .collect();
    SmallSpec {
        stops,
        eps,
        delta,
        targets,
    }
}

/// Random strictly increasing schedule with at least two stops and final
/// stop at most `max_k`, every delta in (0, 0.1].
pub fn random_gap_spec(noise: &mut SeededNoise, max_k: usize) -> SmallSpec {
    let stops = loop {
        let s: Vec<usize> = (1..=max_k).filter(|_| noise.uniform() < 0.5).collect();
        if s.len() >= 2 {
            break s;
        }
    };
    let k = *stops.last().unwrap();
    let eps: Vec<f64> = (0..k).map(|_| uniform_in(noise, 0.05, 1.0)).collect();
    let delta: Vec<f64> = (0..k).map(|_| 0.1 * (1.0 - noise.uniform())).collect();
    let targets = stops
        .iter()
        .map(|&s| uniform_in(noise, 0.0, eps[..s].iter().sum::<f64>()))
        .collect();
    SmallSpec {
        stops,
        eps,
        delta,
        targets,
    }
}
