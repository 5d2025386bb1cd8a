//! Moment trajectories by recursion over `A_mom_α(k)` and by direct
//! composition of the dynamics.

mod export;

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{base_scales, AlgebraError, Bindings, ExpPoly, Monomial, MtpExpr, SymbolId, SymbolKind};
use crate::distributions::{DistributionError, RESIDUE_TOL};
use crate::augmentation::{
    build_moment_system, close_system, moment_basis, monomial_label, AugmentationError, AugmentedSystem,
    MomentSystem, SystemSpec,
};

pub use export::{trajectory_csv, trajectory_json, TrajectoryJson, TrajectoryRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("monomial {0} is not in any propagated basis")]
    MonomialNotInBasis(String),
    #[error("order {0} was not propagated")]
    OrderNotPropagated(u32),
    #[error("horizon {requested} exceeds the system horizon {available}")]
    HorizonTooLong { requested: usize, available: usize },
    #[error(transparent)]
    Augmentation(#[from] AugmentationError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Moments of one order at one step, aligned with the order's basis.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentVector {
    pub order: u32,
    pub k: usize,
    pub values: Vec<f64>,
}

/// All steps `k = 0..=N` of one order.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderTrajectory {
    pub order: u32,
    pub basis: Vec<Vec<u32>>,
    /// `steps[k]` aligned with `basis`.
    pub steps: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentTrajectory {
    pub functionals: Vec<Monomial>,
    pub functional_names: Vec<String>,
    pub orders: BTreeMap<u32, OrderTrajectory>,
    pub horizon: usize,
}

impl MomentTrajectory {
    pub fn vector(&self, order: u32, k: usize) -> Result<MomentVector, PropagationError> {
        let t = self.orders.get(&order).ok_or(PropagationError::OrderNotPropagated(order))?;
        Ok(MomentVector { order, k, values: t.steps[k].clone() })
    }

    /// Sequence over `k` of the moment with exponents `exps` over the functionals.
    ///
    /// With a constant functional present, a lower-degree monomial is also
    /// found inside any higher order by padding with powers of 1.
    pub fn series(&self, exps: &[u32]) -> Result<Vec<f64>, PropagationError> {
        let alpha: u32 = exps.iter().sum();
        let one = self.functionals.iter().position(Monomial::is_one);
        for (&order, t) in self.orders.range(alpha..) {
            let mut e = exps.to_vec();
            if order > alpha {
                match one {
                    Some(i) => e[i] += order - alpha,
                    None => continue,
                }
            }
            if let Ok(idx) = t.basis.binary_search_by(|b| e.as_slice().cmp(b)) {
                return Ok(t.steps.iter().map(|s| s[idx]).collect());
            }
        }
        Err(PropagationError::MonomialNotInBasis(monomial_label(exps, &self.functional_names)))
    }

    pub fn label(&self, exps: &[u32]) -> String {
        monomial_label(exps, &self.functional_names)
    }
}

/// Sequence over `k` of `E[Π s^p]` for state symbols `s`.
pub fn extract_state_moments(
    traj: &MomentTrajectory,
    monomial: &[(SymbolId, u32)],
) -> Result<Vec<f64>, PropagationError> {
    let mut exps = vec![0u32; traj.functionals.len()];
    for &(s, p) in monomial {
        let i = traj
            .functionals
            .iter()
            .position(|m| *m == Monomial::symbol(s))
            .ok_or_else(|| PropagationError::MonomialNotInBasis(format!("{s}^{p}")))?;
        exps[i] += p;
    }
    traj.series(&exps)
}

/// `E[Π_i y_i^{e_i}]` at `k = 0` for independent initial states.
pub fn initial_moment_vector(
    aug: &AugmentedSystem,
    alpha: u32,
    spec: &SystemSpec,
) -> Result<MomentVector, PropagationError> {
    let basis = moment_basis(aug.len(), alpha)?;
    let bindings: Bindings = spec.initial.clone();
    let values = basis
        .par_iter()
        .map(|exps| {
            let mut prod = MtpExpr::constant(1.0);
            for (i, &e) in exps.iter().enumerate() {
                if e > 0 {
                    prod = prod.mul(&MtpExpr::from_monomial(aug.basis[i].clone(), 1.0).pow(e)?)?;
                }
            }
            let ex = prod.expectation(&spec.table, &bindings, |_| false)?;
            if !ex.is_constant() {
                let s = ex.symbols().into_iter().next().map(|s| spec.table.name(s).to_string()).unwrap_or_default();
                return Err(AlgebraError::UnboundSymbol(s));
            }
            Ok(ex.constant_term())
        })
        .collect::<Result<Vec<f64>, AlgebraError>>()?;
    Ok(MomentVector { order: alpha, k: 0, values })
}

/// Augmented system and moment matrices built once, then propagated cheaply.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub aug: AugmentedSystem,
    pub systems: BTreeMap<u32, MomentSystem>,
    pub initial: BTreeMap<u32, MomentVector>,
    functional_names: Vec<String>,
    horizon: usize,
}

impl Propagator {
    pub fn new(spec: &SystemSpec, targets: &[SymbolId], orders: &[u32]) -> Result<Self, PropagationError> {
        let aug = close_system(spec, targets)?;
        Self::from_augmented(spec, aug, orders)
    }

    pub fn from_augmented(spec: &SystemSpec, aug: AugmentedSystem, orders: &[u32]) -> Result<Self, PropagationError> {
        let mut systems = BTreeMap::new();
        let mut initial = BTreeMap::new();
        for &alpha in orders {
            systems.insert(alpha, build_moment_system(&aug, alpha, spec)?);
            initial.insert(alpha, initial_moment_vector(&aug, alpha, spec)?);
        }
        Ok(Propagator {
            functional_names: aug.functional_names(&spec.table),
            aug,
            systems,
            initial,
            horizon: spec.horizon,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `m_α(k+1) = A_mom_α(k) m_α(k)` for `k < n`.
    pub fn propagate(&self, n: usize) -> Result<MomentTrajectory, PropagationError> {
        if n > self.horizon {
            return Err(PropagationError::HorizonTooLong { requested: n, available: self.horizon });
        }
        let orders = self
            .systems
            .iter()
            .map(|(&alpha, sys)| {
                let mut steps = Vec::with_capacity(n + 1);
                steps.push(self.initial[&alpha].values.clone());
                for k in 0..n {
                    let next = sys.matrix(k).mul_vec(&steps[k]);
                    steps.push(next);
                }
                (alpha, OrderTrajectory { order: alpha, basis: sys.basis.clone(), steps })
            })
            .collect();
        Ok(MomentTrajectory {
            functionals: self.aug.basis.clone(),
            functional_names: self.functional_names.clone(),
            orders,
            horizon: n,
        })
    }
}

pub fn propagate_recursive(
    spec: &SystemSpec,
    targets: &[SymbolId],
    orders: &[u32],
    n: usize,
) -> Result<MomentTrajectory, PropagationError> {
    if n > spec.horizon {
        return Err(PropagationError::HorizonTooLong { requested: n, available: spec.horizon });
    }
    let mut spec = spec.clone();
    spec.horizon = n;
    Propagator::new(&spec, targets, orders)?.propagate(n)
}

/// Moments of one order over the target states at the final step.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectMoments {
    pub order: u32,
    /// Exponents over the target states.
    pub exponents: Vec<Vec<u32>>,
    pub values: Vec<f64>,
}

/// Target states at step `n` as expressions in `x(0)` and fresh per-step
/// disturbance symbols, with the laws of every symbol.
pub fn compose_dynamics(
    spec: &SystemSpec,
    n: usize,
) -> Result<(crate::algebra::SymbolTable, BTreeMap<SymbolId, MtpExpr>, Bindings), PropagationError> {
    if n > spec.horizon {
        return Err(PropagationError::HorizonTooLong { requested: n, available: spec.horizon });
    }
    spec.validate()?;
    let mut table = spec.table.clone();
    let mut bindings: Bindings = spec.initial.clone();
    let mut cur: BTreeMap<SymbolId, MtpExpr> = spec.states.iter().map(|&s| (s, MtpExpr::symbol(s))).collect();
    for k in 0..n {
        let controls = spec.control_values(k)?;
        let mut map = cur.clone();
        for (&w, law) in &spec.disturbances {
            let fresh = table
                .declare(&format!("{}@{k}", spec.table.name(w)), SymbolKind::Disturbance)
                .map_err(PropagationError::Algebra)?;
            bindings.insert(fresh, *law);
            map.insert(w, MtpExpr::symbol(fresh));
        }
        let mut next = BTreeMap::new();
        for &s in &spec.states {
            let f = spec.dynamics[&s].substitute_values(&controls);
            next.insert(s, f.substitute_many(&map)?);
        }
        cur = next;
    }
    Ok((table, cur, bindings))
}

/// `E[Π_t x_t(n)^{e_t}]` for every degree-α monomial over the targets, by
/// composing the dynamics `n` times and integrating against every law at once.
pub fn propagate_direct(
    spec: &SystemSpec,
    targets: &[SymbolId],
    orders: &[u32],
    n: usize,
) -> Result<Vec<DirectMoments>, PropagationError> {
    let (_, states, bindings) = compose_dynamics(spec, n)?;
    let bases = base_scales(targets.iter().map(|t| &states[t]));
    let exp: Vec<ExpPoly> = targets.iter().map(|t| ExpPoly::from_mtp(&states[t], &bases)).collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(orders.len());
    for &alpha in orders {
        let exponents = moment_basis(targets.len(), alpha)?;
        let mut values = Vec::with_capacity(exponents.len());
        for exps in &exponents {
            let mut prod = ExpPoly::constant(1.0);
            for (x, &e) in exp.iter().zip(exps) {
                if e > 0 {
                    prod = prod.mul(&x.pow(e)?)?;
                }
            }
            let v = prod.expectation(&bindings, &bases)?;
            if v.im.abs() > RESIDUE_TOL * v.re.abs().max(1.0) {
                return Err(AlgebraError::from(DistributionError::ResidueTooLarge { residue: v.im.abs() }).into());
            }
            values.push(v.re);
        }
        out.push(DirectMoments { order: alpha, exponents, values });
    }
    Ok(out)
}
