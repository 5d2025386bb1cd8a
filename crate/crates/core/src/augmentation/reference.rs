//! Straightforward symbolic construction of `A_mom_α`, used to cross-check the
//! packed builder and as its fallback.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{control_keys, moment_basis, AugmentationError, AugmentedSystem, CsrMatrix, MomentSystem, SystemSpec};
use crate::algebra::{MtpExpr, SymbolId, SymbolKind, SymbolTable};
use crate::distributions::Distribution;

/// Expands `Π_i (Σ_j A_ij y_j)^{e_i}` with explicit placeholder symbols `y_j`
/// and takes the expectation term by term.
pub(crate) fn build_from_rows(
    rows: &[Vec<(usize, MtpExpr)>],
    basis: &[Vec<u32>],
    alpha: u32,
    table: &SymbolTable,
    bindings: &BTreeMap<SymbolId, Distribution>,
) -> Result<CsrMatrix, AugmentationError> {
    let mut table = table.clone();
    let ys: Vec<SymbolId> = (0..rows.len())
        .map(|j| table.declare(&format!("__y{j}"), SymbolKind::State))
        .collect::<Result<_, _>>()?;
    let lin: Vec<MtpExpr> = rows
        .iter()
        .map(|row| {
            let mut e = MtpExpr::zero();
            for (j, a) in row {
                e.add_assign(&a.mul(&MtpExpr::symbol(ys[*j]))?);
            }
            Ok(e)
        })
        .collect::<Result<_, AugmentationError>>()?;
    let index: BTreeMap<&[u32], usize> = basis.iter().enumerate().map(|(i, b)| (b.as_slice(), i)).collect();
    let mut out = CsrMatrix::new(basis.len());
    for exps in basis {
        let mut prod = MtpExpr::constant(1.0);
        for (i, &e) in exps.iter().enumerate() {
            if e > 0 {
                prod = prod.mul(&lin[i].pow(e)?)?;
            }
        }
        let ex = prod.expectation(&table, bindings, |_| false)?;
        let mut entries = Vec::new();
        for (m, c) in ex.terms() {
            let mut col = vec![0u32; rows.len()];
            for f in m.factors() {
                let j = ys.iter().position(|y| *y == f.sym).ok_or_else(|| {
                    AugmentationError::InvalidSpec(format!("symbol `{}` survives the expectation", table.name(f.sym)))
                })?;
                col[j] = f.poly;
            }
            debug_assert_eq!(col.iter().sum::<u32>(), alpha);
            entries.push((index[col.as_slice()] as u32, c));
        }
        entries.sort_by_key(|(c, _)| *c);
        out.push_row(entries);
    }
    Ok(out)
}

/// Same result as [`super::build_moment_system`] through generic expression algebra.
pub fn build_moment_system_symbolic(
    aug: &AugmentedSystem,
    alpha: u32,
    spec: &SystemSpec,
) -> Result<MomentSystem, AugmentationError> {
    let basis = moment_basis(aug.len(), alpha)?;
    let (keys, per_step) = control_keys(spec)?;
    let built = keys
        .iter()
        .map(|c| {
            let rows = aug.numeric_transition(c);
            Ok(Arc::new(build_from_rows(&rows, &basis, alpha, &spec.table, &spec.disturbances)?))
        })
        .collect::<Result<Vec<_>, AugmentationError>>()?;
    let matrices = per_step.into_iter().map(|i| Arc::clone(&built[i])).collect();
    Ok(MomentSystem { order: alpha, basis, matrices })
}
