// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

//! Privacy budget ledger for adaptive ODP composition.
//!
//! A mechanism is admitted only if its worst-case epsilon and its delta fit
//! into the remaining budget. Once it has run, the ledger is charged the
//! epsilon of the cell the output actually fell into, and the full declared
//! delta. Charging a cell-dependent delta is unsound, so `charge` never does.
//!
//! States are immutable; every transition returns a new [`LedgerState`].

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guarantee::{CellId, OdpGuarantee};

/// Total privacy budget `(eps_total, delta_total)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    eps_total: f64,
    delta_total: f64,
}

impl Budget {
    pub fn new(eps_total: f64, delta_total: f64) -> Result<Self> {
        if eps_total.is_nan() || eps_total < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "eps_total must be >= 0, got {eps_total}"
            )));
        }
        if !(0.0..=1.0).contains(&delta_total) {
            return Err(Error::InvalidParameter(format!(
                "delta_total must lie in [0, 1], got {delta_total}"
            )));
        }
        Ok(Self { eps_total, delta_total })
    }

    pub fn eps_total(&self) -> f64 {
        self.eps_total
    }

    pub fn delta_total(&self) -> f64 {
        self.delta_total
    }
}

/// Filter decision for the next mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Decision {
    Cont,
    Halt,
}

/// One realized charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeRecord {
    pub mechanism_label: String,
    pub declared: OdpGuarantee,
    pub realized_cell: CellId,
    pub eps_charged: f64,
    pub delta_charged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerState {
    budget: Budget,
    eps_remaining: f64,
    delta_remaining: f64,
    history: Vec<ChargeRecord>,
}

impl LedgerState {
    pub fn new(budget: Budget) -> Self {
        Self {
            budget,
            eps_remaining: budget.eps_total,
            delta_remaining: budget.delta_total,
            history: Vec::new(),
        }
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    /// Remaining `(eps, delta)`.
    pub fn remaining(&self) -> (f64, f64) {
        (self.eps_remaining, self.delta_remaining)
    }

    pub fn history(&self) -> &[ChargeRecord] {
        &self.history
    }

    /// CONT iff the guarantee's sup epsilon and its delta both fit. The
    /// comparison is exact: no tolerance is applied.
    pub fn admit(&self, g: &OdpGuarantee) -> Decision {
        if g.sup_epsilon() <= self.eps_remaining && g.delta() <= self.delta_remaining {
            Decision::Cont
        } else {
            Decision::Halt
        }
    }

    /// Charges the epsilon of `realized` and the full declared delta.
    pub fn charge(&self, g: &OdpGuarantee, realized: &CellId, label: &str) -> Result<LedgerState> {
        if self.admit(g) == Decision::Halt {
            return Err(Error::ChargeRejected {
                label: label.to_owned(),
                eps: g.sup_epsilon(),
                delta: g.delta(),
                eps_remaining: self.eps_remaining,
                delta_remaining: self.delta_remaining,
            });
        }
        let eps = g
            .epsilon_of(realized)
            .ok_or_else(|| Error::UnknownCell(realized.clone()))?;
        let delta = g.delta();

        let mut next = self.clone();
        // a >= b implies fl(a - b) >= 0, so neither remainder can go negative.
        next.eps_remaining = self.eps_remaining - eps;
        next.delta_remaining = self.delta_remaining - delta;
        next.history.push(ChargeRecord {
            mechanism_label: label.to_owned(),
            declared: g.clone(),
            realized_cell: realized.clone(),
            eps_charged: eps,
            delta_charged: delta,
        });
        Ok(next)
    }

    /// Writes the history as JSON lines, one record per line.
    pub fn export_history<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for rec in &self.history {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Re-applies an exported history to a fresh ledger. Each record is
    /// re-charged against its declared guarantee, so a tampered
    /// `eps_charged` is ignored in favour of the declared cell epsilon.
    pub fn replay(budget: Budget, records: &[ChargeRecord]) -> Result<LedgerState> {
        records.iter().try_fold(LedgerState::new(budget), |s, r| {
            s.charge(&r.declared, &r.realized_cell, &r.mechanism_label)
        })
    }
}

/// Parses JSON-lines history. Errors carry the 1-based line number.
pub fn read_history<R: BufRead>(input: R) -> std::result::Result<Vec<ChargeRecord>, HistoryParseError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| HistoryParseError {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| HistoryParseError {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct HistoryParseError {
    pub line: usize,
    pub message: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guarantee::{dp_to_odp, DpGuarantee};
    use proptest::prelude::*;

    fn ledger(eps: f64, delta: f64) -> LedgerState {
        LedgerState::new(Budget::new(eps, delta).unwrap())
    }

    fn single(eps: f64, delta: f64) -> OdpGuarantee {
        dp_to_odp(DpGuarantee::new(eps, delta).unwrap(), &[CellId::Index(0)]).unwrap()
    }

    fn toy(eps: f64) -> OdpGuarantee {
        OdpGuarantee::from_pairs([("R", eps), ("bot", 0.0)], 0.0).unwrap()
    }

    #[test]
    fn new_ledger_holds_totals() {
        assert_eq!(ledger(1.0, 1e-5).remaining(), (1.0, 1e-5));
        assert_eq!(ledger(0.5, 0.0).remaining(), (0.5, 0.0));
        let zero = ledger(0.0, 0.0);
        assert_eq!(zero.admit(&single(0.0, 0.0)), Decision::Cont);
        assert_eq!(zero.admit(&single(1e-300, 0.0)), Decision::Halt);
        assert_eq!(zero.admit(&single(0.0, 1e-300)), Decision::Halt);
        assert!(zero.history().is_empty());
    }

    #[test]
    fn admit_boundaries() {
        let s = ledger(1.0, 1e-5)
            .charge(&single(0.2, 0.0), &CellId::Index(0), "x")
            .unwrap();
        assert_eq!(s.remaining().0, 0.8);
        assert_eq!(s.admit(&single(0.7, 0.0)), Decision::Cont);
        assert_eq!(s.admit(&single(0.81, 0.0)), Decision::Halt);
        assert_eq!(s.admit(&single(0.8, 0.0)), Decision::Cont);
        assert_eq!(s.admit(&single(0.1, 2e-5)), Decision::Halt);
    }

    #[test]
    fn charge_uses_realized_cell_not_sup() {
        // cell c' = 5 of an SVT guarantee with eps1 = 0.1, eps2 = 0.4, c = 20
        let svt = OdpGuarantee::from_pairs((0..=20u64).map(|c| (c, 0.1 + c as f64 / 20.0 * 0.4)), 0.0).unwrap();
        let s = ledger(1.0, 1e-5).charge(&svt, &CellId::Index(5), "svt").unwrap();
        let (e, d) = s.remaining();
        assert!((e - 0.8).abs() < 1e-15);
        assert_eq!(d, 1e-5);
        assert_eq!(s.history()[0].eps_charged, svt.epsilon_of(&CellId::Index(5)).unwrap());
    }

    #[test]
    fn bottom_costs_nothing_for_toy() {
        let s = ledger(1.0, 0.0).charge(&toy(0.5), &"bot".into(), "toy").unwrap();
        assert_eq!(s.remaining(), (1.0, 0.0));
        assert_eq!(s.history().len(), 1);
    }

    #[test]
    fn delta_charge_is_cell_independent() {
        let g = OdpGuarantee::from_pairs([("R", 0.3), ("bot", 0.0)], 1e-6).unwrap();
        let s0 = ledger(1.0, 1e-5);
        let a = s0.charge(&g, &"R".into(), "m").unwrap();
        let b = s0.charge(&g, &"bot".into(), "m").unwrap();
        assert_eq!(a.remaining().1, b.remaining().1);
        assert_eq!(a.history()[0].delta_charged, 1e-6);
        assert_eq!(b.history()[0].delta_charged, 1e-6);
    }

    #[test]
    fn charge_errors() {
        let s = ledger(0.5, 0.0);
        assert!(matches!(
            s.charge(&toy(0.6), &"bot".into(), "toy"),
            Err(Error::ChargeRejected { .. })
        ));
        assert!(matches!(
            s.charge(&toy(0.4), &"nope".into(), "toy"),
            Err(Error::UnknownCell(_))
        ));
        // failed charges leave the state untouched
        assert_eq!(s.remaining(), (0.5, 0.0));
    }

    #[test]
    fn sup_cell_charges_reproduce_simple_composition() {
        let eps_t = 1.0;
        let worst = 0.15;
        let g = OdpGuarantee::from_pairs([("R", worst), ("bot", 0.05)], 0.0).unwrap();
        let mut s = ledger(eps_t, 0.0);
        let mut k = 0;
        while s.admit(&g) == Decision::Cont {
            s = s.charge(&g, &"R".into(), "m").unwrap();
            k += 1;
        }
        let mut simple = eps_t;
        for _ in 0..k {
            simple -= worst;
        }
        assert_eq!(s.remaining().0, simple);
        assert_eq!(k, 6);
    }

    #[test]
    fn export_and_replay() {
        let g = OdpGuarantee::from_pairs([("R", 0.3), ("bot", 0.1)], 1e-7).unwrap();
        let s = ledger(1.0, 1e-6)
            .charge(&g, &"R".into(), "a")
            .and_then(|s| s.charge(&g, &"bot".into(), "b"))
            .unwrap();
        let mut buf = Vec::new();
        s.export_history(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let recs = read_history(text.as_bytes()).unwrap();
        let replayed = LedgerState::replay(s.budget(), &recs).unwrap();
        assert_eq!(replayed, s);

        let err = read_history("\n{not json}\n".as_bytes()).unwrap_err();
        assert_eq!(err.line, 2);
    }

    proptest! {
        #[test]
        fn single_cell_ledger_matches_simple_accounting(
            charges in prop::collection::vec((0.0f64..0.3, 0.0f64..1e-6), 0..30)
        ) {
            let mut s = ledger(2.0, 1e-5);
            let (mut e, mut d) = (2.0f64, 1e-5f64);
            for (ce, cd) in charges {
                let g = single(ce, cd);
                if ce <= e && cd <= d {
                    s = s.charge(&g, &CellId::Index(0), "m").unwrap();
                    e -= ce;
                    d -= cd;
                } else {
                    prop_assert_eq!(s.admit(&g), Decision::Halt);
                }
                prop_assert_eq!(s.remaining(), (e, d));
            }
        }
    }
}
