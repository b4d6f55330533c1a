// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

//! Exact optimal delta for iterative mechanisms with stopping rules.
//!
//! Every `(ε, δ)`-DP mechanism on a pair of neighbouring inputs is a
//! post-processing of four-outcome randomized response, so the worst case is
//! attained by sequences of randomized responses. The optimal delta is the
//! maximum, over families of output sets `Q_1, ..., Q_n` (one per stop, of
//! sequences of length `k_i`) where no sequence in a lower level is a prefix
//! of a sequence in a higher level, of
//! `Σ_i Pr_0(Q_i) - e^{ε(P_i)} Pr_1(Q_i)`.
//!
//! Such families are antichains in the prefix tree restricted to the
//! scheduled depths, and the objective is additive over selected nodes. A
//! bottom-up pass over the tree computes the maximum exactly:
//!
//! ```text
//! V(q) = max(w(q, n), 0)                                 at depth k_n
//! V(q) = max(w(q, i), Σ_{q' extends q, |q'| = k_{i+1}} V(q'))  at depth k_i
//! ```
//!
//! with `w(q, i) = Pr_0(q) - e^{ε(P_i)} Pr_1(q)`. Work is `O(4^{k_n})`.

use serde::{Deserialize, Serialize};

use super::StopSchedule;
use crate::error::{Error, Result};
use crate::guarantee::DpGuarantee;

/// Default bound on `k_n` (about a million leaves).
pub const DEFAULT_MAX_ITERATIONS: usize = 10;

/// Output distribution of four-outcome randomized response on input bit `b`.
///
/// For `b = 0`: `(δ, (1-δ)e^ε/(1+e^ε), (1-δ)/(1+e^ε), 0)`; `b = 1` is the
/// mirror image.
pub fn rr_distribution(eps: f64, delta: f64, b: bool) -> [f64; 4] {
    let lo = (1.0 - delta) / (1.0 + eps.exp());
    // (1-δ)e^ε/(1+e^ε) = (1-δ)/(1+e^{-ε}) stays finite for large ε
    let hi = (1.0 - delta) / (1.0 + (-eps).exp());
    if b {
        [0.0, lo, hi, delta]
    } else {
        [delta, hi, lo, 0.0]
    }
}

/// Inputs of the optimal-delta computation.
#[derive(Debug, Clone, PartialEq)]
pub struct OptDeltaSpec {
    schedule: StopSchedule,
    per_iteration: Vec<DpGuarantee>,
    eps_targets: Vec<f64>,
}

impl OptDeltaSpec {
    pub fn new(schedule: StopSchedule, per_iteration: Vec<DpGuarantee>, eps_targets: Vec<f64>) -> Result<Self> {
        if per_iteration.len() != schedule.last() {
            return Err(Error::InconsistentSpec(format!(
                "{} per-iteration guarantees for k_n = {}",
                per_iteration.len(),
                schedule.last()
            )));
        }
        if eps_targets.len() != schedule.len() {
            return Err(Error::InconsistentSpec(format!(
                "{} epsilon targets for {} stops",
                eps_targets.len(),
                schedule.len()
            )));
        }
        if let Some(e) = eps_targets.iter().find(|e| e.is_nan() || **e < 0.0) {
            return Err(Error::InconsistentSpec(format!("epsilon target {e} is negative")));
        }
        Ok(Self {
            schedule,
            per_iteration,
            eps_targets,
        })
    }

    /// `k` identical `(eps, 0)` iterations with a single stop at `k`.
    pub fn homogeneous(k: usize, eps: f64, eps_target: f64) -> Result<Self> {
        Self::new(
            StopSchedule::new(vec![k])?,
            vec![DpGuarantee::pure(eps)?; k],
            vec![eps_target],
        )
    }

    pub fn schedule(&self) -> &StopSchedule {
        &self.schedule
    }

    pub fn per_iteration(&self) -> &[DpGuarantee] {
        &self.per_iteration
    }

    pub fn eps_targets(&self) -> &[f64] {
        &self.eps_targets
    }
}

/// On-disk form: `{"stops":[..],"eps":[..],"delta":[..],"eps_targets":[..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptDeltaSpecFile {
    pub stops: Vec<usize>,
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
    pub eps_targets: Vec<f64>,
}

impl TryFrom<OptDeltaSpecFile> for OptDeltaSpec {
    type Error = Error;

    fn try_from(f: OptDeltaSpecFile) -> Result<Self> {
        if f.eps.len() != f.delta.len() {
            return Err(Error::InconsistentSpec(format!(
                "{} eps values but {} delta values",
                f.eps.len(),
                f.delta.len()
            )));
        }
        let per_iteration = f
            .eps
            .iter()
            .zip(&f.delta)
            .map(|(&e, &d)| DpGuarantee::new(e, d))
            .collect::<Result<Vec<_>>>()?;
        OptDeltaSpec::new(StopSchedule::new(f.stops)?, per_iteration, f.eps_targets)
    }
}

impl From<&OptDeltaSpec> for OptDeltaSpecFile {
    fn from(s: &OptDeltaSpec) -> Self {
        Self {
            stops: s.schedule.stops().to_vec(),
            eps: s.per_iteration.iter().map(|g| g.epsilon()).collect(),
            delta: s.per_iteration.iter().map(|g| g.delta()).collect(),
            eps_targets: s.eps_targets.clone(),
        }
    }
}

struct Tree<'a> {
    stops: &'a [usize],
    /// `e^{ε(P_i)}` per stop.
    weights: Vec<f64>,
    p0: Vec<[f64; 4]>,
    p1: Vec<[f64; 4]>,
}

impl<'a> Tree<'a> {
    fn new(spec: &'a OptDeltaSpec, cap: usize) -> Result<Self> {
        let k_n = spec.schedule.last();
        if k_n > cap {
            return Err(Error::CapExceeded { k_n, cap });
        }
        Ok(Self {
            stops: spec.schedule.stops(),
            weights: spec.eps_targets.iter().map(|e| e.exp()).collect(),
            p0: spec
                .per_iteration
                .iter()
                .map(|g| rr_distribution(g.epsilon(), g.delta(), false))
                .collect(),
            p1: spec
                .per_iteration
                .iter()
                .map(|g| rr_distribution(g.epsilon(), g.delta(), true))
                .collect(),
        })
    }

    fn weight(&self, level: usize, p0: f64, p1: f64) -> f64 {
        p0 - self.weights[level] * p1
    }

    /// Best antichain value below a node at depth `stops[level]`.
    fn node_value(&self, level: usize, p0: f64, p1: f64) -> f64 {
        // every descendant has Pr_0 = 0 too, so no selection can gain anything
        if p0 == 0.0 {
            return 0.0;
        }
        let own = self.weight(level, p0, p1);
        if level + 1 == self.stops.len() {
            return own.max(0.0);
        }
        let below = self.extensions(self.stops[level], level + 1, p0, p1);
        own.max(below)
    }

    /// Sum of `node_value` over all extensions from `depth` to `stops[level]`.
    fn extensions(&self, depth: usize, level: usize, p0: f64, p1: f64) -> f64 {
        if depth == self.stops[level] {
            return self.node_value(level, p0, p1);
        }
        let (a, b) = (&self.p0[depth], &self.p1[depth]);
        (0..4)
            .filter(|&o| a[o] > 0.0)
            .map(|o| self.extensions(depth + 1, level, p0 * a[o], p1 * b[o]))
            .sum()
    }

    /// `Σ_q max(0, w(q, level))` over all sequences of length `stops[level]`.
    fn unconstrained(&self, level: usize) -> f64 {
        self.level_sum(0, level, 1.0, 1.0)
    }

    fn level_sum(&self, depth: usize, level: usize, p0: f64, p1: f64) -> f64 {
        if depth == self.stops[level] {
            return self.weight(level, p0, p1).max(0.0);
        }
        let (a, b) = (&self.p0[depth], &self.p1[depth]);
        (0..4)
            .filter(|&o| a[o] > 0.0)
            .map(|o| self.level_sum(depth + 1, level, p0 * a[o], p1 * b[o]))
            .sum()
    }
}

/// Exact optimal delta under the prefix-disjointness constraint, with the
/// default cap on `k_n`.
pub fn opt_delta(spec: &OptDeltaSpec) -> Result<f64> {
    opt_delta_with_cap(spec, DEFAULT_MAX_ITERATIONS)
}

pub fn opt_delta_with_cap(spec: &OptDeltaSpec, cap: usize) -> Result<f64> {
    let tree = Tree::new(spec, cap)?;
    Ok(tree.extensions(0, 0, 1.0, 1.0))
}

/// Per-level maxima without the disjointness constraint: the delta obtained
/// by combining one optimal composition per stop.
pub fn nonopt_delta(spec: &OptDeltaSpec) -> Result<f64> {
    nonopt_delta_with_cap(spec, DEFAULT_MAX_ITERATIONS)
}

pub fn nonopt_delta_with_cap(spec: &OptDeltaSpec, cap: usize) -> Result<f64> {
    let tree = Tree::new(spec, cap)?;
    Ok((0..spec.schedule.len()).map(|i| tree.unconstrained(i)).sum())
}
