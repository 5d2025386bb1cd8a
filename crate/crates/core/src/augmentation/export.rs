use serde::{Deserialize, Serialize};

use super::{monomial_label, AugmentedSystem, MomentSystem, SystemSpec};

/// One transition entry `A_ij` printed in the expression grammar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionEntryJson {
    pub col: usize,
    pub entry: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemMatrixJson {
    pub k: usize,
    /// Dense, row-major.
    pub rows: Vec<Vec<f64>>,
}

/// Serializable form of an augmented system and one of its moment systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSystemJson {
    pub order: u32,
    pub functionals: Vec<String>,
    pub transition: Vec<Vec<TransitionEntryJson>>,
    pub monomials: Vec<String>,
    pub exponents: Vec<Vec<u32>>,
    pub matrices: Vec<SystemMatrixJson>,
}

impl MomentSystemJson {
    pub fn new(spec: &SystemSpec, aug: &AugmentedSystem, ms: &MomentSystem) -> Self {
        let functionals = aug.functional_names(&spec.table);
        let transition = aug
            .transition
            .iter()
            .map(|row| {
                row.iter()
                    .map(|(j, e)| TransitionEntryJson { col: *j, entry: e.display(&spec.table).to_string() })
                    .collect()
            })
            .collect();
        MomentSystemJson {
            order: ms.order,
            monomials: ms.basis.iter().map(|e| monomial_label(e, &functionals)).collect(),
            exponents: ms.basis.clone(),
            matrices: (0..ms.steps()).map(|k| SystemMatrixJson { k, rows: ms.matrix(k).to_dense() }).collect(),
            functionals,
            transition,
        }
    }
}
