// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

//! Iterative mechanisms with data-independent stopping rules.
//!
//! An iterative mechanism runs `M_1, M_2, ...` and may stop after any of the
//! scheduled iteration counts `k_1 < ... < k_n`. Its outputs are partitioned
//! by length, so stopping early only charges the epsilon assigned to that
//! length.

mod homogeneous;
mod opt_delta;

pub use homogeneous::{comp_cutoff_table, homogeneous_opt_delta, min_iterations_for_advantage, CutoffRow};
pub use opt_delta::{
    nonopt_delta, nonopt_delta_with_cap, opt_delta, opt_delta_with_cap, rr_distribution, OptDeltaSpec,
    OptDeltaSpecFile, DEFAULT_MAX_ITERATIONS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guarantee::{combine_subset_dp, CellId, DpGuarantee, OdpGuarantee, SubsetDpGuarantee};
use crate::noise::NoiseSource;

/// Strictly increasing positive iteration counts at which a run may stop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct StopSchedule {
    stops: Vec<usize>,
}

impl StopSchedule {
    pub fn new(stops: Vec<usize>) -> Result<Self> {
        if stops.is_empty() {
            return Err(Error::InvalidParameter("stop schedule must not be empty".into()));
        }
        if stops[0] == 0 {
            return Err(Error::InvalidParameter("stops must be positive".into()));
        }
        if stops.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "stops must be strictly increasing: {stops:?}"
            )));
        }
        Ok(Self { stops })
    }

    pub fn stops(&self) -> &[usize] {
        &self.stops
    }

    pub fn len(&self) -> usize {
        self.stops.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `k_n`, the maximal number of iterations.
    pub fn last(&self) -> usize {
        *self.stops.last().expect("non-empty by construction")
    }

    /// Cell of the outputs of length `stop`.
    pub fn cell(stop: usize) -> CellId {
        CellId::Index(stop as u64)
    }
}

impl TryFrom<Vec<usize>> for StopSchedule {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<StopSchedule> for Vec<usize> {
    fn from(s: StopSchedule) -> Self {
        s.stops
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterativeTranscript<S> {
    pub outputs: Vec<S>,
    pub stopped_at: usize,
    /// Zero-based position of `stopped_at` in the schedule.
    pub stop_index: usize,
}

impl<S> IterativeTranscript<S> {
    pub fn cell(&self) -> CellId {
        StopSchedule::cell(self.stopped_at)
    }
}

/// One iteration: sees previous outputs and the database.
pub type StepFn<'a, S, D> = Box<dyn Fn(&[S], &D, &mut dyn NoiseSource) -> S + 'a>;

/// Stopping rule evaluated on the outputs so far. Only sees outputs, never
/// the database, so it needs no privacy budget of its own.
pub type StopRule<'a, S> = Box<dyn Fn(&[S]) -> bool + 'a>;

/// Runs the mechanisms in order and returns at the first scheduled stop whose
/// rule fires, or after `k_n` iterations.
pub fn run_iterative<S, D>(
    mechanisms: &[StepFn<'_, S, D>],
    schedule: &StopSchedule,
    criteria: &[StopRule<'_, S>],
    db: &D,
    noise: &mut dyn NoiseSource,
) -> Result<IterativeTranscript<S>> {
    if mechanisms.len() != schedule.last() {
        return Err(Error::InconsistentSpec(format!(
            "{} mechanisms for k_n = {}",
            mechanisms.len(),
            schedule.last()
        )));
    }
    if criteria.len() + 1 != schedule.len() {
        return Err(Error::InconsistentSpec(format!(
            "{} stopping criteria for {} stops",
            criteria.len(),
            schedule.len()
        )));
    }
    let mut outputs = Vec::with_capacity(schedule.last());
    let mut next_stop = 0;
    for (k, mechanism) in mechanisms.iter().enumerate() {
        let s = mechanism(&outputs, db, noise);
        outputs.push(s);
        if next_stop + 1 < schedule.len() && outputs.len() == schedule.stops()[next_stop] {
            if criteria[next_stop](&outputs) {
                return Ok(IterativeTranscript {
                    stopped_at: k + 1,
                    stop_index: next_stop,
                    outputs,
                });
            }
            next_stop += 1;
        }
    }
    Ok(IterativeTranscript {
        stopped_at: schedule.last(),
        stop_index: schedule.len() - 1,
        outputs,
    })
}

/// Generic ODP bound for an iterative mechanism from any DP composition
/// theorem `comp(prefix, eps) -> delta`: cell `k_i` gets `eps_targets[i]`,
/// and the delta is the sum of the per-prefix deltas.
pub fn generic_odp_bound<F>(
    schedule: &StopSchedule,
    comp: F,
    eps_targets: &[f64],
    mechanisms: &[DpGuarantee],
) -> Result<OdpGuarantee>
where
    F: Fn(&[DpGuarantee], f64) -> Result<f64>,
{
    if eps_targets.len() != schedule.len() {
        return Err(Error::InconsistentSpec(format!(
            "{} epsilon targets for {} stops",
            eps_targets.len(),
            schedule.len()
        )));
    }
    if mechanisms.len() < schedule.last() {
        return Err(Error::InconsistentSpec(format!(
            "{} mechanism descriptors for k_n = {}",
            mechanisms.len(),
            schedule.last()
        )));
    }
    let parts = schedule
        .stops()
        .iter()
        .zip(eps_targets)
        .map(|(&k, &eps)| {
            let delta = comp(&mechanisms[..k], eps)?;
            SubsetDpGuarantee::new(StopSchedule::cell(k), eps, delta.clamp(0.0, 1.0))
        })
        .collect::<Result<Vec<_>>>()?;
    combine_subset_dp(&parts)
}

/// Simple composition: delta is the sum of deltas when the epsilons fit the
/// target, otherwise the theorem gives no bound.
pub fn simple_composition(mechanisms: &[DpGuarantee], eps: f64) -> Result<f64> {
    let total: f64 = mechanisms.iter().map(|m| m.epsilon()).sum();
    if total <= eps {
        Ok(mechanisms.iter().map(|m| m.delta()).sum())
    } else {
        Err(Error::CompositionFailed(format!(
            "simple composition needs eps >= {total}, target is {eps}"
        )))
    }
}

/// Optimal homogeneous composition of identical pure-DP mechanisms.
pub fn homogeneous_composition(mechanisms: &[DpGuarantee], eps: f64) -> Result<f64> {
    let first = mechanisms
        .first()
        .ok_or_else(|| Error::CompositionFailed("empty prefix".into()))?;
    if mechanisms.iter().any(|m| m != first) || first.delta() != 0.0 {
        return Err(Error::CompositionFailed(
            "homogeneous composition needs identical (eps, 0) mechanisms".into(),
        ));
    }
    homogeneous_opt_delta(mechanisms.len(), first.epsilon(), eps)
}

/// Exact optimal composition of heterogeneous mechanisms via the
/// randomized-response reduction (no stopping rule).
pub fn optimal_composition(mechanisms: &[DpGuarantee], eps: f64) -> Result<f64> {
    let spec = OptDeltaSpec::new(
        StopSchedule::new(vec![mechanisms.len()])?,
        mechanisms.to_vec(),
        vec![eps],
    )?;
    opt_delta(&spec)
}
