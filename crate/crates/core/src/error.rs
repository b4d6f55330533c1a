// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::guarantee::CellId;

/// Errors raised by the accounting library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("duplicate cell id {0}")]
    DuplicateCell(CellId),

    #[error("a guarantee needs at least one cell")]
    EmptyPartition,

    #[error("charge rejected for '{label}': sup epsilon {eps} / delta {delta} exceeds remaining ({eps_remaining}, {delta_remaining})")]
    ChargeRejected {
        label: String,
        eps: f64,
        delta: f64,
        eps_remaining: f64,
        delta_remaining: f64,
    },

    #[error("cell {0} is not part of the declared guarantee")]
    UnknownCell(CellId),

    #[error("k_n = {k_n} exceeds the configured cap of {cap}")]
    CapExceeded { k_n: usize, cap: usize },

    #[error("inconsistent spec: {0}")]
    InconsistentSpec(String),

    #[error("optimizer did not converge within {iterations} iterations (gradient norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("composition theorem not applicable: {0}")]
    CompositionFailed(String),

    #[error("no composition length up to {0} meets the delta target")]
    NoCutoff(usize),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("mismatched stage parameters: ({0}, {1}) vs ({2}, {3})")]
    StageMismatch(f64, f64, f64, f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
