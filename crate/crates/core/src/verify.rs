// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

//! Monte-Carlo checks of DP and ODP claims.
//!
//! A claim `(ε, δ)` is tested on one event `S` by estimating
//! `Pr[M(x⁰) ∈ S]` and `Pr[M(x¹) ∈ S]` and flagging it only when the lower
//! confidence bound of one side exceeds `e^ε` times the upper bound of the
//! other plus `δ`. The composition experiment plays an adaptive adversary
//! against a ledger-guarded curator and returns the adversary's view.

use std::thread;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{ensure, Error, Result};
use crate::guarantee::{dp_to_odp, odp_to_dp, CellId, DpGuarantee, OdpGuarantee};
use crate::iterative::rr_distribution;
use crate::ledger::{Budget, Decision, LedgerState};
use crate::mechanisms::{
    bottom_cell, real_cell, split_svt_budget, svt_odp_guarantee, toy_mechanism, toy_odp_guarantee, Answer, SvtParams,
    SvtSession,
};
use crate::noise::{NoiseSource, SeededNoise};

/// Fewest trials [`estimate_event`] accepts.
pub const MIN_TRIALS: u64 = 1000;

/// One-sided error probability of each confidence bound.
pub const CONFIDENCE_ALPHA: f64 = 0.01;

/// A fixed output event `S`, given by its indicator.
pub struct EventProbe<O: ?Sized> {
    classifier: Box<dyn Fn(&O) -> bool + Send + Sync>,
    label: String,
}

impl<O: ?Sized> EventProbe<O> {
    pub fn new(label: impl Into<String>, classifier: impl Fn(&O) -> bool + Send + Sync + 'static) -> Self {
        Self {
            classifier: Box::new(classifier),
            label: label.into(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn contains(&self, output: &O) -> bool {
        (self.classifier)(output)
    }
}

/// A binomial proportion with one-sided Clopper–Pearson bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionEstimate {
    pub hits: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ProportionEstimate {
    pub fn new(hits: u64, trials: u64) -> Result<Self> {
        ensure(trials > 0 && hits <= trials, || {
            format!("invalid proportion {hits}/{trials}")
        })?;
        let (lower, upper) = clopper_pearson(hits, trials, CONFIDENCE_ALPHA);
        Ok(Self {
            hits,
            trials,
            p_hat: hits as f64 / trials as f64,
            lower,
            upper,
        })
    }
}

/// Inverse of the regularized incomplete beta function in `x`, by bisection.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact binomial bounds: `P(p < lower) ≤ alpha` and `P(p > upper) ≤ alpha`.
pub fn clopper_pearson(hits: u64, trials: u64, alpha: f64) -> (f64, f64) {
    let x = hits as f64;
    let n = trials as f64;
    let lower = if hits == 0 {
        0.0
    } else {
        beta_quantile(x, n - x + 1.0, alpha)
    };
    let upper = if hits == trials {
        1.0
    } else {
        beta_quantile(x + 1.0, n - x, 1.0 - alpha)
    };
    (lower, upper)
}

/// Event frequencies under the two neighbouring inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEstimate {
    pub event: String,
    pub p0: ProportionEstimate,
    pub p1: ProportionEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinguishResult {
    pub event: String,
    pub p0: ProportionEstimate,
    pub p1: ProportionEstimate,
    pub epsilon_claimed: f64,
    pub delta_claimed: f64,
    pub verdict: Verdict,
}

/// Splits `0..trials` across threads and sums the per-trial hit counts.
fn parallel_count<F>(trials: u64, hit: F) -> Result<(u64, u64)>
where
    F: Fn(u64) -> Result<(bool, bool)> + Sync,
{
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(64) as u64;
    let chunk = trials.div_ceil(workers);
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let hit = &hit;
                scope.spawn(move || {
                    let (mut h0, mut h1) = (0u64, 0u64);
                    for t in (w * chunk)..((w + 1) * chunk).min(trials) {
                        let (a, b) = hit(t)?;
                        h0 += a as u64;
                        h1 += b as u64;
                    }
                    Ok((h0, h1))
                })
            })
            .collect();
        handles.into_iter().try_fold((0, 0), |(s0, s1), h| {
            let (h0, h1) = h.join().expect("trial worker panicked")?;
            Ok((s0 + h0, s1 + h1))
        })
    })
}

/// Runs the mechanism `trials` times on each input with independent
/// per-trial streams derived from `seed`.
pub fn estimate_event<I, O, M>(
    mechanism: M,
    input0: &I,
    input1: &I,
    probe: &EventProbe<O>,
    trials: u64,
    seed: u64,
) -> Result<EventEstimate>
where
    I: Sync + ?Sized,
    M: Fn(&I, &mut dyn NoiseSource) -> Result<O> + Sync,
{
    ensure(trials >= MIN_TRIALS, || {
        format!("at least {MIN_TRIALS} trials required, got {trials}")
    })?;
    let (h0, h1) = parallel_count(trials, |t| {
        let mut n0 = SeededNoise::derive(seed, 2 * t);
        let mut n1 = SeededNoise::derive(seed, 2 * t + 1);
        let a = probe.contains(&mechanism(input0, &mut n0)?);
        let b = probe.contains(&mechanism(input1, &mut n1)?);
        Ok((a, b))
    })?;
    Ok(EventEstimate {
        event: probe.label().to_string(),
        p0: ProportionEstimate::new(h0, trials)?,
        p1: ProportionEstimate::new(h1, trials)?,
    })
}

/// Flags the claim if, in either direction, `lower(p_a) > e^ε upper(p_b) + δ`.
pub fn check_dp_bound(estimate: &EventEstimate, eps: f64, delta: f64) -> DistinguishResult {
    let factor = eps.exp();
    let exceeds = |a: &ProportionEstimate, b: &ProportionEstimate| a.lower > factor * b.upper + delta;
    let violated = exceeds(&estimate.p0, &estimate.p1) || exceeds(&estimate.p1, &estimate.p0);
    DistinguishResult {
        event: estimate.event.clone(),
        p0: estimate.p0,
        p1: estimate.p1,
        epsilon_claimed: eps,
        delta_claimed: delta,
        verdict: if violated {
            Verdict::Violated
        } else {
            Verdict::Consistent
        },
    }
}

/// What the adversary observes from one mechanism run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismOutput {
    Bottom,
    Real(f64),
    Answers(Vec<Answer>),
    Symbol(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewEntry {
    Output { output: MechanismOutput, cell: CellId },
    Halt,
}

type RunFn<'a> = Box<dyn FnOnce(&mut dyn NoiseSource) -> Result<MechanismOutput> + 'a>;
type ClassifyFn<'a> = Box<dyn Fn(&MechanismOutput) -> CellId + 'a>;

/// One adversary move: a mechanism with its ODP guarantee, a pair of
/// neighbouring inputs, and the map from outputs to cells.
pub struct Round<'a> {
    label: String,
    guarantee: OdpGuarantee,
    runs: [RunFn<'a>; 2],
    classifier: ClassifyFn<'a>,
}

impl<'a> Round<'a> {
    pub fn new<I, M, C>(
        label: impl Into<String>,
        guarantee: OdpGuarantee,
        inputs: [I; 2],
        mechanism: M,
        classifier: C,
    ) -> Self
    where
        I: 'a,
        M: Fn(&I, &mut dyn NoiseSource) -> Result<MechanismOutput> + Clone + 'a,
        C: Fn(&MechanismOutput) -> CellId + 'a,
    {
        let [x0, x1] = inputs;
        let m0 = mechanism.clone();
        Self {
            label: label.into(),
            guarantee,
            runs: [Box::new(move |n| m0(&x0, n)), Box::new(move |n| mechanism(&x1, n))],
            classifier: Box::new(classifier),
        }
    }
}

/// An adaptive adversary: picks the next round from the view so far and the
/// public ledger state, or `None` to stop.
pub trait Strategy {
    fn next_round(&mut self, view: &[ViewEntry], ledger: &LedgerState) -> Option<Round<'static>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionView {
    pub entries: Vec<ViewEntry>,
    pub ledger: LedgerState,
}

/// Plays up to `rounds` rounds. Each round is admitted against the remaining
/// budget, run on input `b`, classified, and charged at the realized cell;
/// rounds the filter refuses show up as [`ViewEntry::Halt`].
pub fn composition_experiment<S: Strategy + ?Sized>(
    strategy: &mut S,
    budget: Budget,
    b: bool,
    rounds: usize,
    noise: &mut dyn NoiseSource,
) -> Result<CompositionView> {
    ensure(rounds >= 1, || "rounds must be positive".into())?;
    let mut ledger = LedgerState::new(budget);
    let mut entries = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let Some(round) = strategy.next_round(&entries, &ledger) else {
            break;
        };
        if ledger.admit(&round.guarantee) == Decision::Halt {
            entries.push(ViewEntry::Halt);
            continue;
        }
        let [run0, run1] = round.runs;
        let output = if b { run1(noise)? } else { run0(noise)? };
        let cell = (round.classifier)(&output);
        ledger = ledger.charge(&round.guarantee, &cell, &round.label)?;
        entries.push(ViewEntry::Output { output, cell });
    }
    Ok(CompositionView { entries, ledger })
}

/// Estimates the probability of a view event for `b = 0` and `b = 1`. Trial
/// `t` uses the same derived stream for both sides.
pub fn estimate_composition_event<S, F>(
    make_strategy: F,
    budget: Budget,
    rounds: usize,
    probe: &EventProbe<[ViewEntry]>,
    trials: u64,
    seed: u64,
) -> Result<EventEstimate>
where
    S: Strategy,
    F: Fn() -> S + Sync,
{
    ensure(trials >= MIN_TRIALS, || {
        format!("at least {MIN_TRIALS} trials required, got {trials}")
    })?;
    let (h0, h1) = parallel_count(trials, |t| {
        let mut hit = [false; 2];
        for (b, h) in hit.iter_mut().enumerate() {
            let mut noise = SeededNoise::derive(seed, t);
            let view = composition_experiment(&mut make_strategy(), budget, b == 1, rounds, &mut noise)?;
            *h = probe.contains(&view.entries);
        }
        Ok((hit[0], hit[1]))
    })?;
    Ok(EventEstimate {
        event: probe.label().to_string(),
        p0: ProportionEstimate::new(h0, trials)?,
        p1: ProportionEstimate::new(h1, trials)?,
    })
}

fn toy_classifier(o: &MechanismOutput) -> CellId {
    match o {
        MechanismOutput::Bottom => bottom_cell(),
        _ => real_cell(),
    }
}

fn run_toy(f: &f64, eps: f64, noise: &mut dyn NoiseSource) -> Result<MechanismOutput> {
    Ok(match toy_mechanism(*f, eps, noise)? {
        Some(v) => MechanismOutput::Real(v),
        None => MechanismOutput::Bottom,
    })
}

/// Draws one symbol from the randomized-response distribution for bit `b`.
pub fn sample_rr(eps: f64, delta: f64, b: bool, noise: &mut dyn NoiseSource) -> u8 {
    let dist = rr_distribution(eps, delta, b);
    let u = noise.uniform();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u8;
        }
    }
    // rounding left a sliver above the last positive mass
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u8
}

/// Runs the toy mechanism on `f(x⁰) = 0`, `f(x¹) = 1` until the filter halts.
#[derive(Debug, Clone, Copy)]
pub struct ToyUntilExhausted {
    pub eps: f64,
}

impl Strategy for ToyUntilExhausted {
    fn next_round(&mut self, view: &[ViewEntry], _ledger: &LedgerState) -> Option<Round<'static>> {
        if matches!(view.last(), Some(ViewEntry::Halt)) {
            return None;
        }
        let eps = self.eps;
        Some(Round::new(
            "toy",
            toy_odp_guarantee(eps).ok()?,
            [0.0, 1.0],
            move |f: &f64, n: &mut dyn NoiseSource| run_toy(f, eps, n),
            toy_classifier,
        ))
    }
}

/// One SVT pass over a fixed query list, then a Laplace query paid for with
/// whatever budget the SVT cell left over.
#[derive(Debug, Clone)]
pub struct SvtThenLaplace {
    pub params: SvtParams,
    pub queries: [Vec<f64>; 2],
    pub threshold: f64,
    /// Query values of the follow-up count on each input.
    pub follow_up: [f64; 2],
}

impl SvtThenLaplace {
    /// `c = 2` within an SVT budget of half of `eps_total`; the queries are
    /// shifted by 1 between the inputs.
    pub fn reference(eps_total: f64) -> Result<Self> {
        let (eps1, eps2) = split_svt_budget(eps_total / 2.0, 2)?;
        let q0 = vec![0.0, 1.0, 2.0, 0.5, 1.5, 2.5];
        let q1 = q0.iter().map(|v| v + 1.0).collect();
        Ok(Self {
            params: SvtParams::new(eps1, eps2, 2, 1.0)?,
            queries: [q0, q1],
            threshold: 2.0,
            follow_up: [0.0, 1.0],
        })
    }
}

impl Strategy for SvtThenLaplace {
    fn next_round(&mut self, view: &[ViewEntry], ledger: &LedgerState) -> Option<Round<'static>> {
        match view.len() {
            0 => {
                let params = self.params;
                let threshold = self.threshold;
                Some(Round::new(
                    "svt",
                    svt_odp_guarantee(&params).ok()?,
                    self.queries.clone(),
                    move |qs: &Vec<f64>, n: &mut dyn NoiseSource| {
                        let mut session = SvtSession::new(params, n)?;
                        for &q in qs {
                            if session.ask(q, threshold).is_none() {
                                break;
                            }
                        }
                        Ok(MechanismOutput::Answers(session.finish().answers))
                    },
                    |o: &MechanismOutput| match o {
                        MechanismOutput::Answers(a) => {
                            CellId::Index(a.iter().filter(|x| **x == Answer::Above).count() as u64)
                        }
                        _ => CellId::Index(0),
                    },
                ))
            }
            1 => {
                let (eps, _) = ledger.remaining();
                if eps <= 0.0 {
                    return None;
                }
                let g = dp_to_odp(DpGuarantee::pure(eps).ok()?, &[real_cell()]).ok()?;
                Some(Round::new(
                    "laplace",
                    g,
                    self.follow_up,
                    move |f: &f64, n: &mut dyn NoiseSource| Ok(MechanismOutput::Real(f + n.laplace(1.0 / eps))),
                    |_: &MechanismOutput| real_cell(),
                ))
            }
            _ => None,
        }
    }
}

/// Randomized response rounds whose cost depends on the previous symbol:
/// after a symbol pointing at `b = 0` the next round is cheap, otherwise
/// expensive.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveRandomizedResponse {
    pub cheap: (f64, f64),
    pub expensive: (f64, f64),
}

impl Strategy for AdaptiveRandomizedResponse {
    fn next_round(&mut self, view: &[ViewEntry], ledger: &LedgerState) -> Option<Round<'static>> {
        let (eps, delta) = match view.last() {
            Some(ViewEntry::Output {
                output: MechanismOutput::Symbol(0 | 1),
                ..
            }) => self.cheap,
            Some(ViewEntry::Halt) => return None,
            _ => self.expensive,
        };
        let (eps_rem, delta_rem) = ledger.remaining();
        // fall back to the cheap round when the expensive one no longer fits
        let (eps, delta) = if eps <= eps_rem && delta <= delta_rem {
            (eps, delta)
        } else {
            self.cheap
        };
        let g = dp_to_odp(DpGuarantee::new(eps, delta).ok()?, &[CellId::name("rr")]).ok()?;
        Some(Round::new(
            "rr",
            g,
            [false, true],
            move |b: &bool, n: &mut dyn NoiseSource| Ok(MechanismOutput::Symbol(sample_rr(eps, delta, *b, n))),
            |_: &MechanismOutput| CellId::name("rr"),
        ))
    }
}

/// Mechanisms with a built-in check for the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StandardExperiment {
    Toy,
    Laplace,
    Svt,
    Rr,
    /// Laplace with half the scale its claim needs; should be flagged.
    Broken,
}

impl StandardExperiment {
    pub const ALL: [StandardExperiment; 5] = [Self::Toy, Self::Laplace, Self::Svt, Self::Rr, Self::Broken];

    pub fn run(self, trials: u64, seed: u64) -> Result<DistinguishResult> {
        match self {
            Self::Toy => {
                let eps = 1.0;
                let probe = EventProbe::new("released value > 0.5", |o: &Option<f64>| o.is_some_and(|v| v > 0.5));
                let est = estimate_event(|f: &f64, n| toy_mechanism(*f, eps, n), &0.0, &1.0, &probe, trials, seed)?;
                let claim = odp_to_dp(&toy_odp_guarantee(eps)?);
                Ok(check_dp_bound(&est, claim.epsilon(), claim.delta()))
            }
            Self::Laplace | Self::Broken => {
                let eps = 1.0;
                let scale = if self == Self::Broken { 0.5 / eps } else { 1.0 / eps };
                let probe = EventProbe::new("output > 1", |o: &f64| *o > 1.0);
                let est = estimate_event(|f: &f64, n| Ok(f + n.laplace(scale)), &0.0, &1.0, &probe, trials, seed)?;
                Ok(check_dp_bound(&est, eps, 0.0))
            }
            Self::Svt => {
                let params = SvtParams::new(0.1, 0.4, 2, 1.0)?;
                let queries: [Vec<f64>; 2] = [vec![0.0, 2.0, 1.0, 3.0], vec![1.0, 3.0, 2.0, 4.0]];
                let probe = EventProbe::new("first answer is top", |o: &Vec<Answer>| {
                    o.first() == Some(&Answer::Above)
                });
                let est = estimate_event(
                    |qs: &Vec<f64>, n| {
                        let mut s = SvtSession::new(params, n)?;
                        for &q in qs {
                            s.ask(q, 2.0);
                        }
                        Ok(s.finish().answers)
                    },
                    &queries[0],
                    &queries[1],
                    &probe,
                    trials,
                    seed,
                )?;
                let claim = odp_to_dp(&svt_odp_guarantee(&params)?);
                Ok(check_dp_bound(&est, claim.epsilon(), claim.delta()))
            }
            Self::Rr => {
                let (eps, delta) = (0.5, 0.05);
                let probe = EventProbe::new("symbol in {0, 1}", |o: &u8| *o <= 1);
                let est = estimate_event(
                    |b: &bool, n| Ok(sample_rr(eps, delta, *b, n)),
                    &false,
                    &true,
                    &probe,
                    trials,
                    seed,
                )?;
                Ok(check_dp_bound(&est, eps, delta))
            }
        }
    }
}

impl std::str::FromStr for StandardExperiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Self::Toy),
            "laplace" => Ok(Self::Laplace),
            "svt" => Ok(Self::Svt),
            "rr" => Ok(Self::Rr),
            "broken" => Ok(Self::Broken),
            other => Err(Error::InvalidParameter(format!("unknown mechanism {other:?}"))),
        }
    }
}
