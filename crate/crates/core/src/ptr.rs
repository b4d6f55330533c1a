// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

//! Propose-Test-Release accounting.
//!
//! A PTR stage returns either a value or `⊥`. Treated on its own it is
//! `({value, ⊥}, {2ε, ε}, δ)`-ODP. Two stages chained so that the second only
//! runs after the first returned `⊥` cost one of three amounts depending on
//! which case occurred.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::guarantee::{combine_subset_dp, OdpGuarantee, SubsetDpGuarantee};
use crate::mechanisms::{bottom_cell, real_cell};
use crate::noise::NoiseSource;

type StageFn<D> = dyn Fn(&D, Option<f64>, &mut dyn NoiseSource) -> Option<f64> + Send + Sync;

/// An `(ε, δ)`-PTR function. `evaluate(db, None)` is `None` for every
/// database; the declared parameters are the caller's soundness claim.
pub struct PtrStage<D> {
    evaluate: Box<StageFn<D>>,
    eps: f64,
    delta: f64,
}

impl<D> PtrStage<D> {
    pub fn new<F>(eps: f64, delta: f64, evaluate: F) -> Result<Self>
    where
        F: Fn(&D, f64, &mut dyn NoiseSource) -> Option<f64> + Send + Sync + 'static,
    {
        ensure(eps > 0.0, || format!("eps must be positive, got {eps}"))?;
        ensure((0.0..=1.0).contains(&delta), || {
            format!("delta must lie in [0, 1], got {delta}")
        })?;
        Ok(Self {
            evaluate: Box::new(move |db, s, noise| s.and_then(|s| evaluate(db, s, noise))),
            eps,
            delta,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Runs the stage on proposal `s`; a `⊥` proposal always yields `⊥`.
    pub fn evaluate(&self, db: &D, s: Option<f64>, noise: &mut dyn NoiseSource) -> Option<f64> {
        (self.evaluate)(db, s, noise)
    }

    pub fn odp_guarantee(&self) -> OdpGuarantee {
        ptr_stage_odp(self.eps, self.delta).expect("stage parameters validated on construction")
    }
}

/// `{value: 2ε, ⊥: ε}` with delta `δ`.
pub fn ptr_stage_odp(eps: f64, delta: f64) -> Result<OdpGuarantee> {
    ensure(eps > 0.0, || format!("eps must be positive, got {eps}"))?;
    OdpGuarantee::from_pairs([(real_cell(), 2.0 * eps), (bottom_cell(), eps)], delta)
}

/// Two-stage PTR chain analysed as one mechanism: `{value: 3ε, ⊥: 2ε}`.
pub fn iqr_single_odp(eps: f64, delta: f64) -> Result<OdpGuarantee> {
    ensure(eps > 0.0, || format!("eps must be positive, got {eps}"))?;
    combine_subset_dp(&[
        SubsetDpGuarantee::new(real_cell(), 3.0 * eps, delta)?,
        SubsetDpGuarantee::new(bottom_cell(), 2.0 * eps, 0.0)?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PtrCase {
    /// First stage released a value.
    FirstReleased = 1,
    /// First stage returned `⊥`, second released a value.
    SecondReleased = 2,
    /// Both stages returned `⊥`.
    BothBottom = 3,
}

impl PtrCase {
    /// Budget spent when the two stages are charged separately.
    pub fn charge(self, eps: f64, delta: f64) -> (f64, f64) {
        match self {
            PtrCase::FirstReleased => (2.0 * eps, delta),
            PtrCase::SecondReleased => (3.0 * eps, 2.0 * delta),
            PtrCase::BothBottom => (2.0 * eps, 2.0 * delta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtrPairOutcome {
    pub result: Option<f64>,
    pub case: PtrCase,
    pub charged: (f64, f64),
    /// Whether the stages ran in swapped order.
    pub swapped: bool,
}

/// Runs `stage1` and, only if it returned `⊥`, `stage2`. With
/// `randomize_order` a fair coin decides which stage goes first.
pub fn run_ptr_pair<D>(
    stage1: &PtrStage<D>,
    stage2: &PtrStage<D>,
    db: &D,
    s1: Option<f64>,
    s2: Option<f64>,
    randomize_order: bool,
    noise: &mut dyn NoiseSource,
) -> Result<PtrPairOutcome> {
    if stage1.eps != stage2.eps || stage1.delta != stage2.delta {
        return Err(Error::StageMismatch(stage1.eps, stage1.delta, stage2.eps, stage2.delta));
    }
    let swapped = randomize_order && noise.fair_coin();
    let (first, second) = if swapped {
        ((stage2, s2), (stage1, s1))
    } else {
        ((stage1, s1), (stage2, s2))
    };
    let (result, case) = match first.0.evaluate(db, first.1, noise) {
        Some(v) => (Some(v), PtrCase::FirstReleased),
        None => match second.0.evaluate(db, second.1, noise) {
            Some(v) => (Some(v), PtrCase::SecondReleased),
            None => (None, PtrCase::BothBottom),
        },
    };
    Ok(PtrPairOutcome {
        result,
        case,
        charged: case.charge(stage1.eps, stage1.delta),
        swapped,
    })
}

/// Synthetic PTR stage built on a distance-to-instability test.
///
/// `distance_fn` must have sensitivity 1. The stage draws
/// `d̂ = distance(db) + Lap(1/ε)` and, if `d̂ > ln(1/(2δ))/ε`, releases
/// `answer(db) + Lap(s/ε)` where `s` is the proposed local-sensitivity bound.
pub fn distance_test_stage<D, Fd, Fa>(distance_fn: Fd, answer_fn: Fa, eps: f64, delta: f64) -> Result<PtrStage<D>>
where
    D: 'static,
    Fd: Fn(&D) -> u64 + Send + Sync + 'static,
    Fa: Fn(&D) -> f64 + Send + Sync + 'static,
{
    ensure(delta > 0.0 && delta < 1.0, || {
        format!("delta must lie in (0, 1), got {delta}")
    })?;
    let cutoff = distance_threshold(eps, delta)?;
    PtrStage::new(eps, delta, move |db: &D, s: f64, noise: &mut dyn NoiseSource| {
        let d_hat = distance_fn(db) as f64 + noise.laplace(1.0 / eps);
        if d_hat > cutoff {
            Some(answer_fn(db) + noise.laplace(s.abs() / eps))
        } else {
            None
        }
    })
}

/// `ln(1/(2δ))/ε`.
pub fn distance_threshold(eps: f64, delta: f64) -> Result<f64> {
    ensure(eps > 0.0, || format!("eps must be positive, got {eps}"))?;
    ensure(delta > 0.0 && delta < 1.0, || {
        format!("delta must lie in (0, 1), got {delta}")
    })?;
    Ok((1.0 / (2.0 * delta)).ln() / eps)
}
