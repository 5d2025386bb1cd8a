use std::collections::{BTreeMap, HashMap};

use super::expr::{Factor, MtpExpr};
use super::{AlgebraError, SymbolId, SymbolTable};
use crate::distributions::Distribution;
use crate::moments::{mtp_moment, MtpMomentQuery};

/// Laws of independent random symbols.
pub type Bindings = BTreeMap<SymbolId, Distribution>;

impl MtpExpr {
    /// Takes the expectation over every bound symbol not selected by `keep`.
    /// Unbound symbols stay in the result.
    pub fn expectation(
        &self,
        table: &SymbolTable,
        bindings: &Bindings,
        keep: impl Fn(SymbolId) -> bool,
    ) -> Result<MtpExpr, AlgebraError> {
        let _ = table;
        let mut memo: HashMap<Factor, f64> = HashMap::new();
        let mut out = Vec::with_capacity(self.len());
        for (m, c) in self.terms() {
            let (random, kept) = m.split(|s| bindings.contains_key(&s) && !keep(s));
            let mut coef = c;
            for f in random.factors() {
                let v = match memo.get(f) {
                    Some(v) => *v,
                    None => {
                        let v = factor_moment(f, &bindings[&f.sym])?;
                        memo.insert(*f, v);
                        v
                    }
                };
                coef *= v;
                if coef == 0.0 {
                    break;
                }
            }
            out.push((kept, coef));
        }
        Ok(MtpExpr::from_terms(out))
    }
}

pub(crate) fn factor_moment(f: &Factor, dist: &Distribution) -> Result<f64, AlgebraError> {
    let q = match f.trig {
        None => MtpMomentQuery::new(f.poly, 0, 0),
        Some(t) => MtpMomentQuery::new(f.poly, t.cos, t.sin).with_argument(t.scale, t.phase),
    };
    Ok(mtp_moment(dist, q)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{expand_affine_trig, SymbolKind, TrigFn};

    #[test]
    fn expectation_keeps_states() {
        let mut t = SymbolTable::new();
        let x = t.declare("x", SymbolKind::State).unwrap();
        let w = t.declare("w", SymbolKind::Disturbance).unwrap();
        let b = Bindings::from([(w, Distribution::uniform(0.0, 0.5).unwrap())]);
        // cos(x + w) = cos x cos w - sin x sin w
        let e = expand_affine_trig(TrigFn::Cos, &[(x, 1.0), (w, 1.0)], 0.0);
        let ex = e.expectation(&t, &b, |_| false).unwrap();
        let v = 0.3f64;
        let got = ex.eval(&[v, 0.0]);
        let cw = 0.5f64.sin() / 0.5;
        let sw = (1.0 - 0.5f64.cos()) / 0.5;
        assert!((got - (v.cos() * cw - v.sin() * sw)).abs() < 1e-12);
        assert_eq!(ex.symbols().into_iter().collect::<Vec<_>>(), vec![x]);
    }

    #[test]
    fn keep_predicate_blocks_expectation() {
        let mut t = SymbolTable::new();
        let w = t.declare("w", SymbolKind::Disturbance).unwrap();
        let b = Bindings::from([(w, Distribution::normal(1.0, 1.0).unwrap())]);
        let e = MtpExpr::symbol(w).pow(2).unwrap();
        assert_eq!(e.expectation(&t, &b, |_| false).unwrap().constant_term(), 2.0);
        assert_eq!(e.expectation(&t, &b, |s| s == w).unwrap(), e);
    }
}
