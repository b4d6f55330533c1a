// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

//! Output differential privacy.
//!
//! A mechanism's guarantee is refined by its realized output: the output set
//! is partitioned into cells, each with its own ε, under one shared δ. The
//! [`ledger`] charges each run only the ε of the cell it landed in.

pub mod erm;
pub mod error;
pub mod guarantee;
pub mod iterative;
pub mod ledger;
pub mod mechanisms;
pub mod noise;
pub mod ptr;
pub mod verify;

pub use error::{Error, Result};
pub use guarantee::{
    combine_subset_dp, dp_to_odp, odp_to_dp, Cell, CellId, DpGuarantee, OdpGuarantee, SubsetDpGuarantee,
};
pub use ledger::{Budget, ChargeRecord, Decision, LedgerState};
pub use noise::{NoiseSource, SeededNoise, ZeroNoise};
