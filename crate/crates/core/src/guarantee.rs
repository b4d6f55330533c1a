// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

//! Privacy guarantee values and the conversions between plain DP, subset DP
//! and output DP (ODP).
//!
//! An ODP guarantee describes a partition of a mechanism's output set. The
//! partition is intensional: a guarantee only carries cell ids with their
//! epsilons, and a mechanism separately reports which cell a concrete output
//! fell into.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `(epsilon, delta)` differential privacy guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDp")]
pub struct DpGuarantee {
    epsilon: f64,
    delta: f64,
}

#[derive(Deserialize)]
struct RawDp {
    epsilon: f64,
    delta: f64,
}

impl TryFrom<RawDp> for DpGuarantee {
    type Error = Error;

    fn try_from(raw: RawDp) -> Result<Self> {
        DpGuarantee::new(raw.epsilon, raw.delta)
    }
}

impl DpGuarantee {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        check_delta(delta)?;
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Identifier of one cell of an output partition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellId {
    Index(u64),
    Name(String),
}

impl CellId {
    pub fn name(s: impl Into<String>) -> Self {
        CellId::Name(s.into())
    }
}

impl From<u64> for CellId {
    fn from(v: u64) -> Self {
        CellId::Index(v)
    }
}

impl From<usize> for CellId {
    fn from(v: usize) -> Self {
        CellId::Index(v as u64)
    }
}

impl From<&str> for CellId {
    fn from(v: &str) -> Self {
        CellId::Name(v.to_owned())
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellId::Index(i) => write!(f, "{i}"),
            CellId::Name(s) => write!(f, "{s:?}"),
        }
    }
}

/// One cell of an ODP partition together with its epsilon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    pub eps: f64,
}

/// An ODP guarantee: per-cell epsilons over a partition plus one global delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOdp")]
pub struct OdpGuarantee {
    cells: Vec<Cell>,
    delta: f64,
}

#[derive(Deserialize)]
struct RawOdp {
    cells: Vec<Cell>,
    delta: f64,
}

impl TryFrom<RawOdp> for OdpGuarantee {
    type Error = Error;

    fn try_from(raw: RawOdp) -> Result<Self> {
        OdpGuarantee::new(raw.cells, raw.delta)
    }
}

impl OdpGuarantee {
    pub fn new(cells: Vec<Cell>, delta: f64) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::EmptyPartition);
        }
        check_distinct(cells.iter().map(|c| &c.id))?;
        for c in &cells {
            check_epsilon(c.eps)?;
        }
        check_delta(delta)?;
        Ok(Self { cells, delta })
    }

    /// Builds a guarantee from `(id, eps)` pairs.
    pub fn from_pairs<I, C>(pairs: I, delta: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (C, f64)>,
        C: Into<CellId>,
    {
        let cells = pairs.into_iter().map(|(id, eps)| Cell { id: id.into(), eps }).collect();
        Self::new(cells, delta)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn epsilon_of(&self, id: &CellId) -> Option<f64> {
        self.cells.iter().find(|c| &c.id == id).map(|c| c.eps)
    }

    pub fn contains(&self, id: &CellId) -> bool {
        self.cells.iter().any(|c| &c.id == id)
    }

    /// The largest per-cell epsilon, i.e. the worst case over all outputs.
    pub fn sup_epsilon(&self) -> f64 {
        self.cells.iter().map(|c| c.eps).fold(0.0, f64::max)
    }
}

/// Subset DP: the DP inequality restricted to events inside one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetDpGuarantee {
    pub cell: CellId,
    pub epsilon: f64,
    pub delta: f64,
}

impl SubsetDpGuarantee {
    pub fn new(cell: impl Into<CellId>, epsilon: f64, delta: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        check_delta(delta)?;
        Ok(Self {
            cell: cell.into(),
            epsilon,
            delta,
        })
    }
}

/// Every DP mechanism is ODP for any partition of its range, with the same
/// epsilon on every cell.
pub fn dp_to_odp(g: DpGuarantee, cells: &[CellId]) -> Result<OdpGuarantee> {
    let cells = cells
        .iter()
        .map(|id| Cell {
            id: id.clone(),
            eps: g.epsilon,
        })
        .collect();
    OdpGuarantee::new(cells, g.delta)
}

/// An ODP mechanism is DP with the supremum of its cell epsilons.
pub fn odp_to_dp(g: &OdpGuarantee) -> DpGuarantee {
    DpGuarantee {
        epsilon: g.sup_epsilon(),
        delta: g.delta,
    }
}

/// Combines subset-DP guarantees over disjoint cells that jointly cover the
/// output set. Deltas add up, capped at 1.
pub fn combine_subset_dp(parts: &[SubsetDpGuarantee]) -> Result<OdpGuarantee> {
    if parts.is_empty() {
        return Err(Error::EmptyPartition);
    }
    check_distinct(parts.iter().map(|p| &p.cell))?;
    let delta = parts.iter().map(|p| p.delta).sum::<f64>().min(1.0);
    let cells = parts
        .iter()
        .map(|p| Cell {
            id: p.cell.clone(),
            eps: p.epsilon,
        })
        .collect();
    OdpGuarantee::new(cells, delta)
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {eps}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in [0, 1], got {delta}"
        )));
    }
    Ok(())
}

fn check_distinct<'a>(ids: impl Iterator<Item = &'a CellId>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateCell(id.clone()));
        }
    }
    Ok(())
}
