// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

//! Closed form of the optimal delta for `k` identical `(ε, 0)` mechanisms,
//! and the shortest composition for which advanced composition beats simple
//! composition under a delta budget.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Largest composition length searched by [`min_iterations_for_advantage`].
pub const MAX_CUTOFF_SEARCH: usize = 10_000;

/// `Σ_j C(k,j) max(0, e^{jε} - e^{ε'} e^{(k-j)ε}) / (1+e^ε)^k`.
///
/// With `δ_k = 0` the randomized-response outputs 0 and 3 never occur and a
/// sequence's probability only depends on its number of 1s, which collapses
/// the `4^k` sum to `k + 1` binomial terms. Terms are evaluated in the log
/// domain so that large `k` neither overflows nor loses the small tail.
pub fn homogeneous_opt_delta(k: usize, eps: f64, eps_prime: f64) -> Result<f64> {
    ensure(k >= 1, || "k must be at least 1".into())?;
    ensure(eps > 0.0 && eps.is_finite(), || {
        format!("eps must be positive, got {eps}")
    })?;
    ensure(eps_prime >= 0.0, || {
        format!("eps' must be non-negative, got {eps_prime}")
    })?;

    let kf = k as f64;
    // ln (1 + e^ε), stable for any ε > 0
    let log_norm = eps + (-eps).exp().ln_1p();
    let mut log_binom = 0.0; // ln C(k, 0)
    let mut total = 0.0;
    for j in 0..=k {
        let jf = j as f64;
        if j > 0 {
            log_binom += (kf - jf + 1.0).ln() - jf.ln();
        }
        // e^{jε} - e^{ε' + (k-j)ε} = e^{jε} (1 - e^{x}) with x = ε' + (k - 2j)ε
        let x = eps_prime + (kf - 2.0 * jf) * eps;
        if x >= 0.0 {
            continue;
        }
        let log_term = log_binom + jf * eps - kf * log_norm + (-x.exp()).ln_1p();
        total += log_term.exp();
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Smallest `k` for which some `ε' = (k - 2i)ε` with `i >= 1` is reachable
/// with delta at most `delta_max`.
///
/// The delta is non-increasing in `ε'`, so `i = 1` (the largest admissible
/// `ε' = (k-2)ε`) decides whether any `i` works.
pub fn min_iterations_for_advantage(eps: f64, delta_max: f64) -> Result<usize> {
    ensure(eps > 0.0, || format!("eps must be positive, got {eps}"))?;
    ensure(delta_max > 0.0 && delta_max < 1.0, || {
        format!("delta_max must lie in (0, 1), got {delta_max}")
    })?;
    for k in 2..=MAX_CUTOFF_SEARCH {
        let delta = homogeneous_opt_delta(k, eps, (k - 2) as f64 * eps)?;
        if delta <= delta_max {
            return Ok(k);
        }
    }
    Err(Error::NoCutoff(MAX_CUTOFF_SEARCH))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffRow {
    pub delta: f64,
    pub iterations: usize,
    /// Optimal delta attained at `iterations` with `ε' = (iterations - 2)ε`.
    pub attained_delta: f64,
}

/// One [`CutoffRow`] per requested delta.
pub fn comp_cutoff_table(eps: f64, deltas: &[f64]) -> Result<Vec<CutoffRow>> {
    deltas
        .iter()
        .map(|&delta| {
            let iterations = min_iterations_for_advantage(eps, delta)?;
            Ok(CutoffRow {
                delta,
                iterations,
                attained_delta: homogeneous_opt_delta(iterations, eps, (iterations - 2) as f64 * eps)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation in linear space, fine for small k.
    fn naive(k: usize, eps: f64, eps_prime: f64) -> f64 {
        let mut c = 1.0f64;
        let mut total = 0.0;
        for j in 0..=k {
            if j > 0 {
                c = c * (k - j + 1) as f64 / j as f64;
            }
            let v = (j as f64 * eps).exp() - eps_prime.exp() * ((k - j) as f64 * eps).exp();
            total += c * v.max(0.0);
        }
        total / (1.0 + eps.exp()).powi(k as i32)
    }

    #[test]
    fn simple_composition_target_needs_no_delta() {
        for k in 1..20 {
            assert_eq!(homogeneous_opt_delta(k, 0.3, k as f64 * 0.3).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_mechanism_total_variation() {
        let eps = 0.8f64;
        let tv = (eps.exp() - 1.0) / (eps.exp() + 1.0);
        assert!((homogeneous_opt_delta(1, eps, 0.0).unwrap() - tv).abs() < 1e-15);
    }

    #[test]
    fn matches_linear_space_evaluation() {
        for k in 1..=30 {
            for &eps in &[0.05, 0.1, 0.7] {
                for step in 0..=k {
                    let ep = step as f64 * eps * 0.93;
                    let a = homogeneous_opt_delta(k, eps, ep).unwrap();
                    let b = naive(k, eps, ep);
                    assert!(
                        (a - b).abs() <= 1e-13 * b.max(1e-3),
                        "k={k} eps={eps} ep={ep}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn non_increasing_in_eps_prime() {
        let mut last = f64::INFINITY;
        for s in 0..=200 {
            let d = homogeneous_opt_delta(12, 0.2, s as f64 * 0.015).unwrap();
            assert!(d <= last);
            last = d;
        }
        // more removed rounds i only raise delta, so i = 1 is the best choice
        for k in 2..40 {
            let mut prev = 0.0;
            for i in 1..=k / 2 {
                let d = homogeneous_opt_delta(k, 0.1, (k - 2 * i) as f64 * 0.1).unwrap();
                assert!(d >= prev);
                prev = d;
            }
        }
    }

    #[test]
    fn large_k_stays_finite() {
        let d = homogeneous_opt_delta(5000, 0.1, 4998.0 * 0.1).unwrap();
        assert!(d.is_finite() && d >= 0.0);
        let d = homogeneous_opt_delta(2000, 0.5, 0.0).unwrap();
        assert!(d > 0.99 && d <= 1.0);
    }

    #[test]
    fn cutoff_is_monotone() {
        let deltas = [1e-3, 1e-4, 1e-5, 1e-6, 1e-8, 1e-10, 1e-12];
        let rows = comp_cutoff_table(0.1, &deltas).unwrap();
        assert!(rows.windows(2).all(|w| w[0].iterations <= w[1].iterations));
        for r in &rows {
            assert!(r.attained_delta <= r.delta);
            if r.iterations > 2 {
                let k = r.iterations - 1;
                let before = homogeneous_opt_delta(k, 0.1, (k - 2) as f64 * 0.1).unwrap();
                assert!(before > r.delta);
            }
        }
        assert!(min_iterations_for_advantage(0.1, 0.0).is_err());
        assert!(min_iterations_for_advantage(0.0, 1e-5).is_err());
    }
}
