//! Moment-matrix construction on bit-packed monomials.
//!
//! After controls are fixed, every transition entry is a polynomial in
//! `ω^p cos^a(s ω) sin^b(s ω)` per disturbance, all atoms of one disturbance
//! sharing the base scale `s`. Such a product is a 128-bit key with a 6-bit
//! field per exponent, so multiplying terms is integer addition. Products of
//! functionals are keyed the same way with a 5-bit field per functional.
//!
//! Rows of `A_mom_α` are enumerated depth-first over non-decreasing sequences
//! of row indices, which visits the degree-α basis in its stored order and
//! lets siblings share the product of their common prefix.

use std::collections::BTreeMap;

use rustc_hash::FxHashMap;

use super::{AugmentationError, CsrMatrix};
use crate::algebra::{MtpExpr, SymbolId};
use crate::distributions::Distribution;
use crate::moments::TrigMomentTable;

const D_BITS: u32 = 6;
const D_FIELD_MAX: u32 = (1 << D_BITS) - 1;
const D_SLOT_BITS: u32 = 3 * D_BITS;
const MAX_SLOTS: usize = (128 / D_SLOT_BITS) as usize;
const Y_BITS: u32 = 5;
const Y_FIELD_MAX: u32 = (1 << Y_BITS) - 1;
const MAX_FUNCTIONALS: usize = (128 / Y_BITS) as usize;

type DPoly = Vec<(u128, f64)>;
type Prefix = FxHashMap<(u128, u128), f64>;

struct Slot {
    sym: SymbolId,
    base: f64,
    max_poly: u32,
    max_freq: u32,
}

fn field(key: u128, slot: usize, which: u32) -> u32 {
    ((key >> (slot as u32 * D_SLOT_BITS + which * D_BITS)) & D_FIELD_MAX as u128) as u32
}

struct Engine {
    rows: Vec<Vec<(u128, DPoly)>>,
    alpha: u32,
    tables: Vec<TrigMomentTable>,
    memo: FxHashMap<u128, f64>,
    col_of: FxHashMap<u128, u32>,
    out: CsrMatrix,
}

impl Engine {
    fn expectation(&mut self, key: u128) -> Result<f64, AugmentationError> {
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        let mut v = 1.0;
        for (s, t) in self.tables.iter().enumerate() {
            let (p, c, si) = (field(key, s, 0), field(key, s, 1), field(key, s, 2));
            if p + c + si > 0 {
                v *= t.get(p, c, si)?;
            }
        }
        self.memo.insert(key, v);
        Ok(v)
    }

    fn dfs(&mut self, depth: u32, start: usize, prefix: &Prefix) -> Result<(), AugmentationError> {
        for i in start..self.rows.len() {
            if depth + 1 == self.alpha {
                self.emit(i, prefix)?;
            } else {
                let mut next = Prefix::default();
                for (&(y, d), &c) in prefix {
                    for (yu, terms) in &self.rows[i] {
                        for &(dk, c2) in terms {
                            *next.entry((y + yu, d + dk)).or_insert(0.0) += c * c2;
                        }
                    }
                }
                self.dfs(depth + 1, i, &next)?;
            }
        }
        Ok(())
    }

    fn emit(&mut self, i: usize, prefix: &Prefix) -> Result<(), AugmentationError> {
        let mut acc: FxHashMap<u128, f64> = FxHashMap::default();
        let row = std::mem::take(&mut self.rows[i]);
        for (&(y, d), &c) in prefix {
            for (yu, terms) in &row {
                let mut s = 0.0;
                for &(dk, c2) in terms {
                    s += c2 * self.expectation(d + dk)?;
                }
                *acc.entry(y + yu).or_insert(0.0) += c * s;
            }
        }
        self.rows[i] = row;
        let mut entries: Vec<(u32, f64)> =
            acc.into_iter().filter(|(_, v)| *v != 0.0).map(|(y, v)| (self.col_of[&y], v)).collect();
        entries.sort_by_key(|(c, _)| *c);
        self.out.push_row(entries);
        Ok(())
    }
}

/// Builds `A_mom_α` for one control assignment, or `None` when the system
/// does not fit the packed key layout.
pub(crate) fn build(
    rows: &[Vec<(usize, MtpExpr)>],
    basis: &[Vec<u32>],
    alpha: u32,
    bindings: &BTreeMap<SymbolId, Distribution>,
) -> Result<Option<CsrMatrix>, AugmentationError> {
    let n = rows.len();
    if n > MAX_FUNCTIONALS || alpha > Y_FIELD_MAX {
        return Ok(None);
    }
    let mut slots: Vec<Slot> = Vec::new();
    for (_, e) in rows.iter().flatten() {
        for (m, _) in e.terms() {
            for f in m.factors() {
                if !bindings.contains_key(&f.sym) {
                    return Err(AugmentationError::InvalidSpec(format!(
                        "transition entry depends on symbol {} that is not a disturbance",
                        f.sym
                    )));
                }
                let slot = match slots.iter().position(|s| s.sym == f.sym) {
                    Some(p) => p,
                    None => {
                        slots.push(Slot { sym: f.sym, base: f64::INFINITY, max_poly: 0, max_freq: 0 });
                        slots.len() - 1
                    }
                };
                if let Some(t) = f.trig {
                    slots[slot].base = slots[slot].base.min(t.scale);
                }
            }
        }
    }
    if slots.len() > MAX_SLOTS {
        return Ok(None);
    }

    let mut packed_rows: Vec<Vec<(u128, DPoly)>> = Vec::with_capacity(n);
    for row in rows {
        let mut prow = Vec::with_capacity(row.len());
        for (j, e) in row {
            let mut e = e.clone();
            for s in &slots {
                if s.base.is_finite() {
                    e = e.rebase(s.sym, s.base)?;
                }
            }
            let mut terms = Vec::with_capacity(e.len());
            for (m, c) in e.terms() {
                let mut key = 0u128;
                for f in m.factors() {
                    let slot = slots.iter().position(|s| s.sym == f.sym).expect("slot exists");
                    let (tc, ts) = f.trig.map_or((0, 0), |t| (t.cos, t.sin));
                    if f.poly > D_FIELD_MAX || tc > D_FIELD_MAX || ts > D_FIELD_MAX {
                        return Ok(None);
                    }
                    slots[slot].max_poly = slots[slot].max_poly.max(f.poly);
                    slots[slot].max_freq = slots[slot].max_freq.max(tc.max(ts));
                    let shift = slot as u32 * D_SLOT_BITS;
                    key += (f.poly as u128) << shift;
                    key += (tc as u128) << (shift + D_BITS);
                    key += (ts as u128) << (shift + 2 * D_BITS);
                }
                terms.push((key, c));
            }
            prow.push(((1u128) << (*j as u32 * Y_BITS), terms));
        }
        packed_rows.push(prow);
    }
    // every field of a product of α entries must stay inside its bit width
    if slots.iter().any(|s| alpha * s.max_poly > D_FIELD_MAX || alpha * s.max_freq > D_FIELD_MAX) {
        return Ok(None);
    }

    let mut tables = Vec::with_capacity(slots.len());
    for s in &slots {
        let base = if s.base.is_finite() { s.base } else { 1.0 };
        // cos + sin of a product of α entries is at most 2 α times the larger field
        tables.push(TrigMomentTable::new(
            &bindings[&s.sym],
            base,
            0.0,
            (alpha * s.max_poly) as usize,
            (2 * alpha * s.max_freq) as usize,
        )?);
    }
    let col_of = basis
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let key = e.iter().enumerate().fold(0u128, |k, (j, &p)| k + ((p as u128) << (j as u32 * Y_BITS)));
            (key, i as u32)
        })
        .collect();
    let mut engine = Engine {
        rows: packed_rows,
        alpha,
        tables,
        memo: FxHashMap::default(),
        col_of,
        out: CsrMatrix::new(basis.len()),
    };
    let mut root = Prefix::default();
    root.insert((0, 0), 1.0);
    engine.dfs(0, 0, &root)?;
    debug_assert_eq!(engine.out.n_rows(), basis.len());
    Ok(Some(engine.out))
}
