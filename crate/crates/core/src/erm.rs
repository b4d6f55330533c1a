// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

//! L2-regularized logistic regression with output perturbation, and a noisy
//! release test on a held-out set that turns a poor model into `⊥`.
//!
//! A `⊥` outcome only pays for the test, so a model that fails the test
//! costs `ε₂` instead of `ε₁`.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::guarantee::{CellId, OdpGuarantee};
use crate::mechanisms::{bottom_cell, real_cell};
use crate::noise::{laplace_quantile, NoiseSource};

const NORM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Records with `‖x‖₂ ≤ 1` and `y ∈ [-1, 1]`, all of one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    records: Vec<Record>,
    dim: usize,
}

impl Dataset {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.x.len());
        for (i, r) in records.iter().enumerate() {
            if r.x.len() != dim {
                return Err(Error::InvalidDataset(format!(
                    "record {i} has dimension {}, expected {dim}",
                    r.x.len()
                )));
            }
            if r.x.iter().any(|v| !v.is_finite()) || !r.y.is_finite() {
                return Err(Error::InvalidDataset(format!("record {i} has a non-finite value")));
            }
            let norm = l2_norm(&r.x);
            if norm > 1.0 + NORM_SLACK {
                return Err(Error::InvalidDataset(format!("record {i} has norm {norm} > 1")));
            }
            if !(-1.0..=1.0).contains(&r.y) {
                return Err(Error::InvalidDataset(format!(
                    "record {i} has label {} outside [-1, 1]",
                    r.y
                )));
            }
        }
        Ok(Self { records, dim })
    }

    /// Reads CSV with header `x_1,...,x_d,y`. With `normalize`, rows whose
    /// covariate norm exceeds 1 are scaled onto the unit sphere.
    pub fn from_csv<R: Read>(input: R, normalize: bool) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut records = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| Error::InvalidDataset(format!("row {}: {e}", i + 1)))?;
            let values = row
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidDataset(format!("row {}: {e}", i + 1)))?;
            let (y, x) = values
                .split_last()
                .ok_or_else(|| Error::InvalidDataset(format!("row {} is empty", i + 1)))?;
            let mut x = x.to_vec();
            if normalize {
                let n = l2_norm(&x);
                if n > 1.0 {
                    x.iter_mut().for_each(|v| *v /= n);
                }
            }
            records.push(Record { x, y: *y });
        }
        Self::new(records)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Copy with record `index` replaced, for neighbouring-dataset checks.
    pub fn with_replaced(&self, index: usize, record: Record) -> Result<Self> {
        let mut records = self.records.clone();
        records[index] = record;
        Self::new(records)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErmConfig {
    /// Regularization strength Λ.
    pub lambda: f64,
    /// Stop once the gradient norm is at most this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl ErmConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            tolerance: 1e-8,
            max_iterations: 100_000,
        }
    }

    fn validate(&self) -> Result<()> {
        ensure(self.lambda > 0.0, || {
            format!("lambda must be positive, got {}", self.lambda)
        })?;
        ensure(self.tolerance > 0.0, || "tolerance must be positive".into())?;
        ensure(self.max_iterations >= 1, || "max_iterations must be positive".into())
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln(1 + e^{-z})` without overflow.
fn logistic_loss(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-z})`.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `(1/n) Σ ln(1 + e^{-y pᵀx}) + (Λ/2)‖p‖²`.
pub fn objective(p: &[f64], data: &Dataset, lambda: f64) -> f64 {
    let n = data.len() as f64;
    let loss: f64 = data.records.iter().map(|r| logistic_loss(r.y * dot(p, &r.x))).sum();
    loss / n + 0.5 * lambda * dot(p, p)
}

pub fn objective_gradient(p: &[f64], data: &Dataset, lambda: f64) -> Vec<f64> {
    let n = data.len() as f64;
    let mut g: Vec<f64> = p.iter().map(|v| lambda * v).collect();
    for r in &data.records {
        // d/dz ln(1 + e^{-z}) = -σ(-z)
        let coef = -r.y * sigmoid(-r.y * dot(p, &r.x)) / n;
        for (gi, xi) in g.iter_mut().zip(&r.x) {
            *gi += coef * xi;
        }
    }
    g
}

/// Minimizes the regularized logistic loss by gradient descent with
/// backtracking line search.
pub fn train_logreg(train: &Dataset, cfg: &ErmConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidDataset("training set is empty".into()));
    }
    // The loss has curvature at most ‖x‖²/4 ≤ 1/4, so 1/L is always a descent step.
    let max_sq = train.records.iter().map(|r| dot(&r.x, &r.x)).fold(0.0, f64::max);
    let min_step = 1.0 / (0.25 * max_sq + cfg.lambda);

    let mut p = vec![0.0; train.dim()];
    let mut f = objective(&p, train, cfg.lambda);
    let mut step = 2.0 * min_step;
    for _ in 0..cfg.max_iterations {
        let g = objective_gradient(&p, train, cfg.lambda);
        let g_sq = dot(&g, &g);
        if g_sq.sqrt() <= cfg.tolerance {
            return Ok(p);
        }
        let mut t = step;
        let (next, f_next) = loop {
            let cand: Vec<f64> = p.iter().zip(&g).map(|(pi, gi)| pi - t * gi).collect();
            let f_cand = objective(&cand, train, cfg.lambda);
            if f_cand <= f - 0.5 * t * g_sq || t <= min_step {
                break (cand, f_cand);
            }
            t = (0.5 * t).max(min_step);
        };
        // let the next search start a little more optimistic
        step = (2.0 * t).min(4.0 * min_step);
        p = next;
        f = f_next;
    }
    let grad_norm = l2_norm(&objective_gradient(&p, train, cfg.lambda));
    if grad_norm <= cfg.tolerance {
        Ok(p)
    } else {
        Err(Error::NonConvergence {
            iterations: cfg.max_iterations,
            grad_norm,
        })
    }
}

/// L2-sensitivity bound of the minimizer, `2/(n Λ)`.
pub fn minimizer_sensitivity(n_train: usize, lambda: f64) -> f64 {
    2.0 / (n_train as f64 * lambda)
}

/// Draws `q` with density proportional to `exp(-(nΛε/2)‖q‖₂)`: the norm is
/// `Gamma(d, 2/(nΛε))` and the direction is uniform on the sphere.
pub fn sample_output_noise<N: NoiseSource + ?Sized>(
    d: usize,
    n_train: usize,
    lambda: f64,
    eps: f64,
    noise: &mut N,
) -> Vec<f64> {
    if d == 0 {
        return Vec::new();
    }
    let radius = noise.gamma(d as f64, minimizer_sensitivity(n_train, lambda) / eps);
    if radius == 0.0 {
        return vec![0.0; d];
    }
    loop {
        let dir: Vec<f64> = (0..d).map(|_| noise.standard_normal()).collect();
        let n = l2_norm(&dir);
        if n > 0.0 {
            return dir.into_iter().map(|v| radius * v / n).collect();
        }
    }
}

/// Output perturbation: trains and adds norm-calibrated noise.
pub fn erm_output_perturb<N: NoiseSource + ?Sized>(
    train: &Dataset,
    eps1: f64,
    cfg: &ErmConfig,
    noise: &mut N,
) -> Result<Vec<f64>> {
    ensure(eps1 > 0.0, || format!("eps1 must be positive, got {eps1}"))?;
    let p = train_logreg(train, cfg)?;
    let q = sample_output_noise(train.dim(), train.len(), cfg.lambda, eps1, noise);
    Ok(p.iter().zip(&q).map(|(a, b)| a + b).collect())
}

/// Mean absolute error of `h_p(x) = 2σ(pᵀx) - 1` against the labels; in [0, 2].
pub fn error_score(p: &[f64], test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::InvalidDataset("test set is empty".into()));
    }
    let total: f64 = test
        .records
        .iter()
        .map(|r| ((0.5 * dot(p, &r.x)).tanh() - r.y).abs())
        .sum();
    Ok((total / test.len() as f64).clamp(0.0, 2.0))
}

/// Noise scale numerator of the release test:
/// `a = max(2/n_test, 2(e^{2/(n_train Λ)} - 1))`.
pub fn test_noise_numerator(n_train: usize, n_test: usize, lambda: f64) -> f64 {
    let by_test = 2.0 / n_test as f64;
    let by_train = 2.0 * minimizer_sensitivity(n_train, lambda).exp_m1();
    by_test.max(by_train)
}

/// `{R^d: max(ε₁, (2/n_test)/a · ε₂), ⊥: min(that, ε₂)}` with delta 0.
pub fn logreg_test_odp(eps1: f64, eps2: f64, n_train: usize, n_test: usize, lambda: f64) -> Result<OdpGuarantee> {
    ensure(eps1 > 0.0 && eps2 > 0.0, || "eps1 and eps2 must be positive".into())?;
    ensure(n_train > 0 && n_test > 0, || "dataset sizes must be positive".into())?;
    ensure(lambda > 0.0, || "lambda must be positive".into())?;
    let a = test_noise_numerator(n_train, n_test, lambda);
    let released = eps1.max(2.0 / n_test as f64 / a * eps2);
    let bottom = released.min(eps2);
    OdpGuarantee::from_pairs([(real_cell(), released), (bottom_cell(), bottom)], 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestedOutput {
    /// The released parameters, or `None` for `⊥`.
    pub value: Option<Vec<f64>>,
    pub realized_cell: CellId,
    pub guarantee: OdpGuarantee,
}

/// Trains a perturbed model and releases it only if its noisy test error is
/// at most `t`.
#[allow(clippy::too_many_arguments)]
pub fn logreg_with_test<N: NoiseSource + ?Sized>(
    train: &Dataset,
    test: &Dataset,
    eps1: f64,
    eps2: f64,
    cfg: &ErmConfig,
    t: f64,
    noise: &mut N,
) -> Result<TestedOutput> {
    let guarantee = logreg_test_odp(eps1, eps2, train.len(), test.len(), cfg.lambda)?;
    let p = erm_output_perturb(train, eps1, cfg, noise)?;
    let a = test_noise_numerator(train.len(), test.len(), cfg.lambda);
    let r = noise.laplace(a / eps2);
    if error_score(&p, test)? + r <= t {
        Ok(TestedOutput {
            value: Some(p),
            realized_cell: real_cell(),
            guarantee,
        })
    } else {
        Ok(TestedOutput {
            value: None,
            realized_cell: bottom_cell(),
            guarantee,
        })
    }
}

/// Which statistic of the test noise `r` a percentile refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseStatistic {
    /// One-sided percentile of `r` itself.
    #[default]
    Signed,
    /// Percentile of `|r|`.
    Absolute,
}

/// `(n_train, n_test)` with `n_train = round(train_frac · n)`.
pub fn split_sizes(n: usize, train_frac: f64) -> Result<(usize, usize)> {
    ensure(train_frac > 0.0 && train_frac < 1.0, || {
        format!("train fraction must lie in (0, 1), got {train_frac}")
    })?;
    let n_train = (train_frac * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidParameter(format!(
            "split of n = {n} at {train_frac} leaves an empty side"
        )));
    }
    Ok((n_train, n - n_train))
}

/// Percentile `pct` of the noise added to the test error for a dataset of
/// `n` records.
pub fn noise_percentile(
    n: usize,
    eps2: f64,
    lambda: f64,
    train_frac: f64,
    pct: f64,
    stat: NoiseStatistic,
) -> Result<f64> {
    ensure(eps2 > 0.0, || format!("eps2 must be positive, got {eps2}"))?;
    ensure(lambda > 0.0, || format!("lambda must be positive, got {lambda}"))?;
    ensure(pct > 0.5 && pct < 1.0, || {
        format!("pct must lie in (0.5, 1), got {pct}")
    })?;
    let (n_train, n_test) = split_sizes(n, train_frac)?;
    let scale = test_noise_numerator(n_train, n_test, lambda) / eps2;
    match stat {
        NoiseStatistic::Signed => laplace_quantile(scale, pct),
        NoiseStatistic::Absolute => Ok(-scale * (-pct).ln_1p()),
    }
}
