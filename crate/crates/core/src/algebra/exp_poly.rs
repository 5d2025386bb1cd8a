//! Polynomials in `x^p e^{i m b x}` per symbol, with complex coefficients.
//!
//! Cosines and sines of long affine sums expand into exponentially many
//! cos/sin products, while their exponential form stays one term each. Powers
//! of composed dynamics are therefore taken in this form, and expectations
//! read `E[x^p e^{i m b x}] = i^{-p} Φ^(p)(m b)` straight off the
//! characteristic function.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rustc_hash::FxHashMap as HashMap;

use super::expr::MtpExpr;
use super::trig::integer_ratio;
use super::{AlgebraError, Bindings, SymbolId, DEFAULT_TERM_BUDGET};
use crate::moments::binomial;

type Key = Vec<(SymbolId, u32, i32)>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExpPoly {
    terms: HashMap<Key, Complex64>,
}

/// Smallest trig scale of every symbol across `exprs`.
pub fn base_scales<'a>(exprs: impl IntoIterator<Item = &'a MtpExpr>) -> BTreeMap<SymbolId, f64> {
    let mut out: BTreeMap<SymbolId, f64> = BTreeMap::new();
    for e in exprs {
        for (m, _) in e.terms() {
            for f in m.factors() {
                if let Some(t) = f.trig {
                    let b = out.entry(f.sym).or_insert(t.scale);
                    *b = b.min(t.scale);
                }
            }
        }
    }
    out
}

fn merge(a: &Key, b: &Key) -> Key {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j >= b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push(a[i]);
            i += 1;
        } else if i >= a.len() || b[j].0 < a[i].0 {
            out.push(b[j]);
            j += 1;
        } else {
            let (p, m) = (a[i].1 + b[j].1, a[i].2 + b[j].2);
            if p > 0 || m != 0 {
                out.push((a[i].0, p, m));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

impl ExpPoly {
    pub fn constant(c: f64) -> Self {
        let mut terms = HashMap::default();
        if c != 0.0 {
            terms.insert(Vec::new(), Complex64::new(c, 0.0));
        }
        ExpPoly { terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Converts using the given base scale for every trig symbol.
    pub fn from_mtp(e: &MtpExpr, bases: &BTreeMap<SymbolId, f64>) -> Result<Self, AlgebraError> {
        let mut out = ExpPoly::default();
        let half = Complex64::new(0.5, 0.0);
        let half_i = Complex64::new(0.0, -0.5); // 1 / (2i)
        for (m, c) in e.terms() {
            let mut acc = ExpPoly::constant(c);
            for f in m.factors() {
                let mut part: Vec<(Key, Complex64)> = Vec::new();
                match f.trig {
                    None => part.push((vec![(f.sym, f.poly, 0)], Complex64::new(1.0, 0.0))),
                    Some(t) => {
                        let base = bases[&f.sym];
                        let n = integer_ratio(t.scale, base).ok_or(AlgebraError::IncompatibleAtoms {
                            sym: f.sym,
                            a: t.scale,
                            b: base,
                        })? as i32;
                        // cos^b = 2^-b Σ C(b,j) e^{i(2j-b)a}, sin^c = (2i)^-c Σ C(c,l) (-1)^{c-l} e^{i(2l-c)a}
                        let (b, cc) = (t.cos, t.sin);
                        for j in 0..=b {
                            for l in 0..=cc {
                                let sign = if (cc - l) % 2 == 0 { 1.0 } else { -1.0 };
                                let w = binomial(b, j) as f64 * binomial(cc, l) as f64 * sign;
                                let freq = 2 * (j + l) as i32 - (b + cc) as i32;
                                let rot = Complex64::from_polar(1.0, freq as f64 * t.phase);
                                let coef = half.powu(b) * half_i.powu(cc) * w * rot;
                                let key = if f.poly == 0 && freq == 0 { vec![] } else { vec![(f.sym, f.poly, freq * n)] };
                                part.push((key, coef));
                            }
                        }
                    }
                }
                let mut p = ExpPoly::default();
                for (k, v) in part {
                    *p.terms.entry(k).or_insert(Complex64::new(0.0, 0.0)) += v;
                }
                acc = acc.mul(&p)?;
            }
            out.add_assign(&acc);
        }
        out.prune(1e-15);
        Ok(out)
    }

    fn add_assign(&mut self, other: &ExpPoly) {
        for (k, v) in &other.terms {
            *self.terms.entry(k.clone()).or_insert(Complex64::new(0.0, 0.0)) += v;
        }
    }

    /// Drops coefficients smaller than `rel` times the largest one.
    fn prune(&mut self, rel: f64) {
        let max = self.terms.values().fold(0.0f64, |a, c| a.max(c.norm()));
        self.terms.retain(|_, c| c.norm() > rel * max);
    }

    pub fn mul(&self, other: &ExpPoly) -> Result<ExpPoly, AlgebraError> {
        let mut out: HashMap<Key, Complex64> = HashMap::with_capacity_and_hasher(self.len().max(other.len()), Default::default());
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                *out.entry(merge(ka, kb)).or_insert(Complex64::new(0.0, 0.0)) += ca * cb;
            }
            if out.len() > DEFAULT_TERM_BUDGET {
                return Err(AlgebraError::TermBudgetExceeded { budget: DEFAULT_TERM_BUDGET });
            }
        }
        Ok(ExpPoly { terms: out })
    }

    pub fn pow(&self, n: u32) -> Result<ExpPoly, AlgebraError> {
        let mut out = ExpPoly::constant(1.0);
        for _ in 0..n {
            out = out.mul(self)?;
        }
        Ok(out)
    }

    /// Expectation with every symbol bound to an independent law.
    pub fn expectation(&self, bindings: &Bindings, bases: &BTreeMap<SymbolId, f64>) -> Result<Complex64, AlgebraError> {
        let mut memo: HashMap<(SymbolId, u32, i32), Complex64> = HashMap::default();
        let mut sum = Complex64::new(0.0, 0.0);
        for (key, c) in &self.terms {
            let mut v = *c;
            for &(s, p, m) in key {
                let e = match memo.get(&(s, p, m)) {
                    Some(e) => *e,
                    None => {
                        let law = bindings.get(&s).ok_or_else(|| AlgebraError::UnboundSymbol(s.to_string()))?;
                        let t = m as f64 * bases.get(&s).copied().unwrap_or(1.0);
                        let d = law.cf_jet(t, p as usize)?.derivatives[p as usize];
                        // i^{-p}
                        let e = d * Complex64::new(0.0, -1.0).powu(p);
                        memo.insert((s, p, m), e);
                        e
                    }
                };
                v *= e;
            }
            sum += v;
        }
        Ok(sum)
    }
}
