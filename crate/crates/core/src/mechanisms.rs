// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

//! The coin-flip toy mechanism, the Sparse Vector Technique with its per-count
//! ODP guarantee, and sparse vector release with budget reallocation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::guarantee::{CellId, OdpGuarantee};
use crate::noise::{NoiseSource, SeededNoise};

/// Cell holding every real-valued output.
pub fn real_cell() -> CellId {
    CellId::name("R")
}

/// Cell holding the `⊥` output.
pub fn bottom_cell() -> CellId {
    CellId::name("bot")
}

/// Flips a fair coin: on heads returns `f_value + Lap(1/eps)`, on tails `None`.
pub fn toy_mechanism<N: NoiseSource + ?Sized>(f_value: f64, eps: f64, noise: &mut N) -> Result<Option<f64>> {
    ensure(eps > 0.0, || format!("eps must be positive, got {eps}"))?;
    if noise.fair_coin() {
        Ok(Some(f_value + noise.laplace(1.0 / eps)))
    } else {
        Ok(None)
    }
}

/// `{R: eps, bot: 0}` with delta 0.
pub fn toy_odp_guarantee(eps: f64) -> Result<OdpGuarantee> {
    OdpGuarantee::from_pairs([(real_cell(), eps), (bottom_cell(), 0.0)], 0.0)
}

pub fn toy_cell(output: &Option<f64>) -> CellId {
    match output {
        Some(_) => real_cell(),
        None => bottom_cell(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvtParams {
    pub eps1: f64,
    pub eps2: f64,
    /// Maximum number of `⊤` answers.
    pub c: u32,
    pub sensitivity: f64,
}

impl SvtParams {
    pub fn new(eps1: f64, eps2: f64, c: u32, sensitivity: f64) -> Result<Self> {
        let p = Self {
            eps1,
            eps2,
            c,
            sensitivity,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.eps1 > 0.0 && self.eps2 > 0.0, || {
            format!("eps1 and eps2 must be positive, got {} and {}", self.eps1, self.eps2)
        })?;
        ensure(self.c >= 1, || "c must be at least 1".into())?;
        ensure(self.sensitivity > 0.0, || {
            format!("sensitivity must be positive, got {}", self.sensitivity)
        })
    }

    /// Scale of the threshold noise `rho`.
    pub fn threshold_scale(&self) -> f64 {
        self.sensitivity / self.eps1
    }

    /// Scale of the per-query noise `nu_i`.
    pub fn query_scale(&self) -> f64 {
        2.0 * self.c as f64 * self.sensitivity / self.eps2
    }
}

/// One element of the query stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Query {
    Value(f64),
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    #[serde(rename = "bot")]
    Below,
    #[serde(rename = "top")]
    Above,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvtTranscript {
    pub answers: Vec<Answer>,
    pub top_count: u32,
}

impl SvtTranscript {
    pub fn cell(&self) -> CellId {
        CellId::Index(self.top_count as u64)
    }
}

/// Interactive SVT run: the threshold noise is drawn once on construction,
/// and each call to [`SvtSession::ask`] answers one query until `c` tops
/// have been produced. Queries may be chosen adaptively from earlier answers.
pub struct SvtSession<'n, N: NoiseSource + ?Sized> {
    params: SvtParams,
    rho: f64,
    noise: &'n mut N,
    transcript: SvtTranscript,
}

impl<'n, N: NoiseSource + ?Sized> SvtSession<'n, N> {
    pub fn new(params: SvtParams, noise: &'n mut N) -> Result<Self> {
        params.validate()?;
        let rho = noise.laplace(params.threshold_scale());
        Ok(Self {
            params,
            rho,
            noise,
            transcript: SvtTranscript {
                answers: Vec::new(),
                top_count: 0,
            },
        })
    }

    pub fn exhausted(&self) -> bool {
        self.transcript.top_count >= self.params.c
    }

    /// Returns `None` once the cap has been reached.
    pub fn ask(&mut self, query_value: f64, threshold: f64) -> Option<Answer> {
        if self.exhausted() {
            return None;
        }
        let nu = self.noise.laplace(self.params.query_scale());
        let answer = if query_value + nu >= threshold + self.rho {
            self.transcript.top_count += 1;
            Answer::Above
        } else {
            Answer::Below
        };
        self.transcript.answers.push(answer);
        Some(answer)
    }

    pub fn answers(&self) -> &[Answer] {
        &self.transcript.answers
    }

    pub fn finish(self) -> SvtTranscript {
        self.transcript
    }
}

/// Runs SVT over a pull-based query stream. The stream ends at `Stop`, when it
/// is exhausted, or once `c` tops were answered.
pub fn svt_run<N, I>(params: SvtParams, queries: I, thresholds: &[f64], noise: &mut N) -> Result<SvtTranscript>
where
    N: NoiseSource + ?Sized,
    I: IntoIterator<Item = Query>,
{
    let mut session = SvtSession::new(params, noise)?;
    for (i, q) in queries.into_iter().enumerate() {
        if session.exhausted() {
            break;
        }
        let value = match q {
            Query::Stop => break,
            Query::Value(v) => v,
        };
        let t = *thresholds.get(i).ok_or_else(|| {
            Error::InvalidParameter(format!("no threshold for query {i} ({} given)", thresholds.len()))
        })?;
        session.ask(value, t);
    }
    Ok(session.finish())
}

/// Epsilon of the cell with `top_count` tops: `eps1 + (top_count / c) eps2`.
pub fn svt_cell_epsilon(params: &SvtParams, top_count: u32) -> f64 {
    params.eps1 + top_count as f64 / params.c as f64 * params.eps2
}

/// Cells `0..=c` (by number of tops) with delta 0.
pub fn svt_odp_guarantee(params: &SvtParams) -> Result<OdpGuarantee> {
    params.validate()?;
    OdpGuarantee::from_pairs(
        (0..=params.c).map(|k| (CellId::Index(k as u64), svt_cell_epsilon(params, k))),
        0.0,
    )
}

/// Splits an SVT budget with `eps1 / eps2 = (2c)^(-2/3)`.
pub fn split_svt_budget(eps_svt: f64, c: u32) -> Result<(f64, f64)> {
    ensure(eps_svt > 0.0, || format!("eps_svt must be positive, got {eps_svt}"))?;
    ensure(c >= 1, || "c must be a positive integer".into())?;
    let eps1 = eps_svt / (1.0 + (2.0 * c as f64).powf(2.0 / 3.0));
    Ok((eps1, eps_svt - eps1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseReleaseResult {
    pub released_indices: Vec<usize>,
    pub released_values: Vec<f64>,
    /// Laplace scale used for each released entry; 0 when nothing was released.
    pub per_entry_scale: f64,
    pub realized_cell: CellId,
    /// Release budget after reallocation, `eps3 + ((c - c') / c) eps2`.
    pub release_budget: f64,
}

/// Release budget available after SVT produced `top_count` tops.
pub fn reallocated_release_budget(params: &SvtParams, eps3: f64, top_count: u32) -> f64 {
    eps3 + (params.c - top_count) as f64 / params.c as f64 * params.eps2
}

/// Per-entry Laplace scale when `top_count >= 1` entries share the
/// reallocated release budget.
pub fn odp_entry_scale(params: &SvtParams, eps3: f64, value_sensitivity: f64, top_count: u32) -> f64 {
    value_sensitivity * top_count as f64 / reallocated_release_budget(params, eps3, top_count)
}

/// Per-entry scale of the worst-case analysis: `eps3 / c` per entry.
pub fn baseline_entry_scale(params: &SvtParams, eps3: f64, value_sensitivity: f64) -> f64 {
    value_sensitivity * params.c as f64 / eps3
}

/// Selects large entries with SVT on `|value_i|` and releases them with the
/// budget left over after the realized SVT cost.
pub fn sparse_release<N: NoiseSource + ?Sized>(
    values: &[f64],
    value_sensitivity: f64,
    params: SvtParams,
    eps3: f64,
    threshold: f64,
    noise: &mut N,
) -> Result<SparseReleaseResult> {
    ensure(eps3 > 0.0, || format!("eps3 must be positive, got {eps3}"))?;
    ensure(value_sensitivity > 0.0, || {
        format!("value sensitivity must be positive, got {value_sensitivity}")
    })?;
    let thresholds = vec![threshold; values.len()];
    let transcript = svt_run(params, values.iter().map(|v| Query::Value(v.abs())), &thresholds, noise)?;
    let top_count = transcript.top_count;
    let release_budget = reallocated_release_budget(&params, eps3, top_count);
    let released_indices: Vec<usize> = transcript
        .answers
        .iter()
        .enumerate()
        .filter(|(_, a)| **a == Answer::Above)
        .map(|(i, _)| i)
        .collect();
    if released_indices.is_empty() {
        return Ok(SparseReleaseResult {
            released_indices,
            released_values: Vec::new(),
            per_entry_scale: 0.0,
            realized_cell: CellId::Index(0),
            release_budget,
        });
    }
    let scale = odp_entry_scale(&params, eps3, value_sensitivity, top_count);
    let released_values = released_indices
        .iter()
        .map(|&i| values[i] + noise.laplace(scale))
        .collect();
    Ok(SparseReleaseResult {
        released_indices,
        released_values,
        per_entry_scale: scale,
        realized_cell: transcript.cell(),
        release_budget,
    })
}

/// Setting for the sparse-release noise study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseStudyConfig {
    pub n_entries: usize,
    pub large_value: f64,
    pub small_value: f64,
    pub threshold: f64,
    pub value_sensitivity: f64,
    pub params: SvtParams,
    pub eps3: f64,
}

impl SparseStudyConfig {
    /// 100 entries in {0, 1000}, threshold 500, c = 20, total epsilon 1 split
    /// evenly between selection and release, sensitivity 1.
    pub fn reference() -> Self {
        let c = 20;
        let (eps1, eps2) = split_svt_budget(0.5, c).expect("valid constants");
        Self {
            n_entries: 100,
            large_value: 1000.0,
            small_value: 0.0,
            threshold: 500.0,
            value_sensitivity: 1.0,
            params: SvtParams {
                eps1,
                eps2,
                c,
                sensitivity: 1.0,
            },
            eps3: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudyRow {
    pub n_large: usize,
    /// Mean per-entry expected |noise| over trials that released at least one entry.
    pub odp_expected_noise: f64,
    /// Standard error of `odp_expected_noise`.
    pub odp_std_error: f64,
    pub baseline_noise: f64,
    /// Fraction of trials that released at least one entry.
    pub release_rate: f64,
    pub trials: usize,
}

/// Monte-Carlo estimate of the expected per-entry absolute noise under
/// reallocation, for a vector with `n_large` large entries at random positions.
///
/// Given `c'` tops, the released entries get `Lap(b)` noise with
/// `E|Lap(b)| = b`, so each trial contributes its realized scale `b(c')`.
/// Trials in which nothing is released carry no noise and are excluded from
/// the mean; their share is reported as `1 - release_rate`.
pub fn sparse_release_noise_study(
    cfg: &SparseStudyConfig,
    n_large: usize,
    trials: usize,
    seed: u64,
) -> Result<NoiseStudyRow> {
    ensure(trials >= 1, || "trials must be at least 1".into())?;
    ensure(n_large <= cfg.n_entries, || {
        format!("n_large {n_large} exceeds n_entries {}", cfg.n_entries)
    })?;
    cfg.params.validate()?;
    ensure(cfg.eps3 > 0.0, || "eps3 must be positive".into())?;

    let mut noise = SeededNoise::derive(seed, n_large as u64);
    let mut values = vec![cfg.small_value; cfg.n_entries];
    values[..n_large].fill(cfg.large_value);
    let thresholds = vec![cfg.threshold; cfg.n_entries];

    let (mut sum, mut sum_sq, mut released) = (0.0, 0.0, 0usize);
    for _ in 0..trials {
        values.shuffle(noise.rng());
        let t = svt_run(
            cfg.params,
            values.iter().map(|v| Query::Value(v.abs())),
            &thresholds,
            &mut noise,
        )?;
        if t.top_count == 0 {
            continue;
        }
        let b = odp_entry_scale(&cfg.params, cfg.eps3, cfg.value_sensitivity, t.top_count);
        sum += b;
        sum_sq += b * b;
        released += 1;
    }
    let (mean, se) = if released == 0 {
        (0.0, 0.0)
    } else {
        let m = sum / released as f64;
        let var = if released > 1 {
            ((sum_sq - released as f64 * m * m) / (released - 1) as f64).max(0.0)
        } else {
            0.0
        };
        (m, (var / released as f64).sqrt())
    };
    Ok(NoiseStudyRow {
        n_large,
        odp_expected_noise: mean,
        odp_std_error: se,
        baseline_noise: baseline_entry_scale(&cfg.params, cfg.eps3, cfg.value_sensitivity),
        release_rate: released as f64 / trials as f64,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guarantee::odp_to_dp;
    use crate::noise::ZeroNoise;

    fn params(eps1: f64, eps2: f64, c: u32) -> SvtParams {
        SvtParams::new(eps1, eps2, c, 1.0).unwrap()
    }

    #[test]
    fn toy_follows_coin() {
        let mut heads = ZeroNoise::heads();
        assert_eq!(toy_mechanism(3.0, 1.0, &mut heads).unwrap(), Some(3.0));
        let mut tails = ZeroNoise::tails();
        assert_eq!(toy_mechanism(3.0, 1.0, &mut tails).unwrap(), None);
        assert!(toy_mechanism(3.0, 0.0, &mut heads).is_err());

        let g = toy_odp_guarantee(0.7).unwrap();
        assert_eq!(g.epsilon_of(&real_cell()), Some(0.7));
        assert_eq!(g.epsilon_of(&bottom_cell()), Some(0.0));
        assert_eq!(g.delta(), 0.0);
        assert_eq!(toy_cell(&None), bottom_cell());
    }

    #[test]
    fn svt_noiseless_comparisons() {
        let p = params(0.1, 0.4, 20);
        let t = svt_run(
            p,
            [Query::Value(10.0), Query::Value(0.0)],
            &[5.0, 5.0],
            &mut ZeroNoise::new(),
        )
        .unwrap();
        assert_eq!(t.answers, vec![Answer::Above, Answer::Below]);
        assert_eq!(t.top_count, 1);

        let p = params(0.1, 0.4, 1);
        let t = svt_run(
            p,
            [Query::Value(10.0), Query::Value(10.0), Query::Stop],
            &[5.0, 5.0, 5.0],
            &mut ZeroNoise::new(),
        )
        .unwrap();
        assert_eq!(t.answers, vec![Answer::Above]);

        let t = svt_run(
            p,
            [Query::Value(0.0), Query::Stop, Query::Value(9.0)],
            &[5.0; 3],
            &mut ZeroNoise::new(),
        )
        .unwrap();
        assert_eq!(t.answers, vec![Answer::Below]);

        let t = svt_run(p, std::iter::empty(), &[], &mut ZeroNoise::new()).unwrap();
        assert!(t.answers.is_empty());
        assert_eq!(t.top_count, 0);
    }

    #[test]
    fn svt_threshold_ties_answer_top() {
        let t = svt_run(params(0.1, 0.4, 3), [Query::Value(5.0)], &[5.0], &mut ZeroNoise::new()).unwrap();
        assert_eq!(t.answers, vec![Answer::Above]);
    }

    #[test]
    fn svt_requires_thresholds() {
        let err = svt_run(
            params(0.1, 0.4, 3),
            [Query::Value(1.0); 2],
            &[0.0],
            &mut ZeroNoise::new(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn svt_is_reproducible() {
        let p = params(0.1, 0.4, 5);
        let qs: Vec<Query> = (0..50).map(|i| Query::Value(i as f64)).collect();
        let th = vec![25.0; 50];
        let a = svt_run(p, qs.clone(), &th, &mut SeededNoise::new(9)).unwrap();
        let b = svt_run(p, qs, &th, &mut SeededNoise::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.top_count <= 5);
        assert_eq!(
            a.top_count as usize,
            a.answers.iter().filter(|x| **x == Answer::Above).count()
        );
    }

    #[test]
    fn svt_adaptive_session() {
        let mut z = ZeroNoise::new();
        let mut s = SvtSession::new(params(0.1, 0.4, 2), &mut z).unwrap();
        let mut q = 0.0;
        while let Some(a) = s.ask(q, 3.0) {
            q = if a == Answer::Below { q + 1.0 } else { 0.0 };
        }
        assert_eq!(
            s.finish().answers,
            vec![
                Answer::Below,
                Answer::Below,
                Answer::Below,
                Answer::Above,
                Answer::Below,
                Answer::Below,
                Answer::Below,
                Answer::Above
            ]
        );
    }

    #[test]
    fn svt_guarantee_values() {
        let p = params(0.1, 0.4, 20);
        let g = svt_odp_guarantee(&p).unwrap();
        assert_eq!(g.cells().len(), 21);
        assert!((g.epsilon_of(&CellId::Index(5)).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(g.epsilon_of(&CellId::Index(0)), Some(0.1));
        assert!((g.epsilon_of(&CellId::Index(20)).unwrap() - 0.5).abs() < 1e-15);
        let dp = odp_to_dp(&g);
        assert!((dp.epsilon() - 0.5).abs() < 1e-15);
        assert_eq!(dp.delta(), 0.0);
        let eps: Vec<f64> = g.cells().iter().map(|c| c.eps).collect();
        assert!(eps.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn budget_split() {
        let (e1, e2) = split_svt_budget(0.5, 20).unwrap();
        // 40^(2/3) = 11.696070952...
        assert!((40f64.powf(2.0 / 3.0) - 11.696_070_952).abs() < 1e-8);
        assert!((e1 - 0.5 / 12.696_070_952_3).abs() < 1e-9);
        assert!((e1 - 0.03938).abs() < 1e-5);
        assert!((e2 - 0.46062).abs() < 1e-5);
        assert!((e1 / e2 - 40f64.powf(-2.0 / 3.0)).abs() < 1e-9);
        assert_eq!(e1 + e2, 0.5);
        assert!(split_svt_budget(0.5, 0).is_err());
        assert!(split_svt_budget(0.0, 3).is_err());
    }

    #[test]
    fn reallocation_never_hurts() {
        let cfg = SparseStudyConfig::reference();
        let p = cfg.params;
        let baseline = baseline_entry_scale(&p, cfg.eps3, 1.0);
        assert_eq!(baseline, 40.0);
        for k in 1..=p.c {
            let budget = reallocated_release_budget(&p, cfg.eps3, k);
            assert!(budget >= cfg.eps3);
            assert_eq!(budget == cfg.eps3, k == p.c);
            assert!(budget / k as f64 >= cfg.eps3 / p.c as f64);
            assert!(odp_entry_scale(&p, cfg.eps3, 1.0, k) <= baseline);
        }
        let s10 = odp_entry_scale(&p, cfg.eps3, 1.0, 10);
        assert!((reallocated_release_budget(&p, cfg.eps3, 10) - 0.73031).abs() < 1e-5);
        assert!((s10 - 13.693).abs() < 1e-3, "{s10}");
    }

    #[test]
    fn sparse_release_noiseless() {
        let p = params(0.1, 0.4, 4);
        let values = [0.0, 1000.0, -800.0, 3.0];
        let r = sparse_release(&values, 1.0, p, 0.5, 500.0, &mut ZeroNoise::new()).unwrap();
        assert_eq!(r.released_indices, vec![1, 2]);
        assert_eq!(r.released_values, vec![1000.0, -800.0]);
        assert_eq!(r.realized_cell, CellId::Index(2));
        let eps3p = 0.5 + 2.0 / 4.0 * 0.4;
        assert!((r.release_budget - eps3p).abs() < 1e-15);
        assert!((r.per_entry_scale - 2.0 / eps3p).abs() < 1e-12);

        let r = sparse_release(&[0.0; 10], 1.0, p, 0.5, 500.0, &mut ZeroNoise::new()).unwrap();
        assert!(r.released_indices.is_empty() && r.released_values.is_empty());
        assert_eq!(r.realized_cell, CellId::Index(0));
    }

    #[test]
    fn noise_study_rows() {
        let cfg = SparseStudyConfig::reference();
        let full = sparse_release_noise_study(&cfg, 20, 500, 1).unwrap();
        assert!(full.odp_expected_noise <= full.baseline_noise);
        let none = sparse_release_noise_study(&cfg, 0, 2000, 1).unwrap();
        assert!(none.odp_expected_noise < full.baseline_noise / 4.0);
        assert_eq!(none.baseline_noise, full.baseline_noise);
        assert!(sparse_release_noise_study(&cfg, 0, 0, 1).is_err());
        assert!(sparse_release_noise_study(&cfg, 101, 10, 1).is_err());
    }
}
