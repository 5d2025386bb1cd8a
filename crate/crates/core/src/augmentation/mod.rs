//! Exact linear-state re-expression of trigonometric-affine systems and the
//! per-order moment recursions built from it.
//!
//! [`close_system`] turns the dynamics into `y(k+1) = A_k(ω, u) y(k)` over a
//! finite list of state functionals `y`. [`build_moment_system`] then takes the
//! expectation of every degree-α product of those rows, giving numeric
//! matrices `A_mom_α(k)` with `m_α(k+1) = A_mom_α(k) m_α(k)`.

mod csr;
mod export;
mod packed;
mod reference;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{eval_numeric, AlgebraError, Expr, Monomial, MtpExpr, SymbolId, SymbolKind, SymbolTable};
use crate::distributions::{Distribution, DistributionError};
use crate::moments::binomial;

pub use csr::CsrMatrix;
pub use export::{MomentSystemJson, SystemMatrixJson, TransitionEntryJson};
pub use reference::build_moment_system_symbolic;

pub const DEFAULT_MAX_ITERATIONS: usize = 50;
pub const DEFAULT_MAX_FUNCTIONALS: usize = 64;
/// Functionals of higher total degree stop the closure loop.
pub const MAX_FUNCTIONAL_DEGREE: u32 = 16;
pub const DEFAULT_BASIS_CAP: usize = 20_000;
/// Image terms below this fraction of the largest coefficient are dropped.
pub const PRUNE_REL_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentationError {
    #[error("closure did not terminate after {iterations} iterations ({functionals} functionals); the system has no finite linear-state form, try the direct method")]
    ClosureDiverged { iterations: usize, functionals: usize },
    #[error("moment basis of size {size} exceeds the cap of {cap}")]
    BasisTooLarge { size: u64, cap: usize },
    #[error("invalid system: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// Numeric control input `u*(k)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    Constant(f64),
    List(Vec<f64>),
    /// Expression in the step index `k`.
    Formula(Expr),
}

impl Schedule {
    pub fn value_at(&self, k: usize) -> Result<f64, AugmentationError> {
        match self {
            Schedule::Constant(v) => Ok(*v),
            Schedule::List(v) => v
                .get(k)
                .copied()
                .ok_or_else(|| AugmentationError::InvalidSpec(format!("control list has no entry for k={k}"))),
            Schedule::Formula(e) => Ok(eval_numeric(e, &|n: &str| (n == "k").then_some(k as f64))?),
        }
    }

    pub fn covers(&self, horizon: usize) -> bool {
        match self {
            Schedule::List(v) => v.len() >= horizon,
            _ => true,
        }
    }
}

/// Discrete-time stochastic system `x(k+1) = f(x(k), u(k), ω(k))`.
///
/// Disturbances are independent across symbols and across time steps, with
/// the same law at every step.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub table: SymbolTable,
    pub states: Vec<SymbolId>,
    pub dynamics: BTreeMap<SymbolId, MtpExpr>,
    pub disturbances: BTreeMap<SymbolId, Distribution>,
    pub controls: BTreeMap<SymbolId, Schedule>,
    pub initial: BTreeMap<SymbolId, Distribution>,
    pub horizon: usize,
}

impl SystemSpec {
    pub fn validate(&self) -> Result<(), AugmentationError> {
        let bad = |m: String| Err(AugmentationError::InvalidSpec(m));
        for &s in &self.states {
            if self.table.kind(s) != SymbolKind::State {
                return bad(format!("`{}` is not a state", self.table.name(s)));
            }
            let Some(f) = self.dynamics.get(&s) else {
                return bad(format!("state `{}` has no update", self.table.name(s)));
            };
            if !self.initial.contains_key(&s) {
                return bad(format!("state `{}` has no initial law", self.table.name(s)));
            }
            for sym in f.symbols() {
                let ok = match self.table.kind(sym) {
                    SymbolKind::State => self.dynamics.contains_key(&sym),
                    SymbolKind::Disturbance => self.disturbances.contains_key(&sym),
                    SymbolKind::Control => self.controls.contains_key(&sym),
                    SymbolKind::Constant => false,
                };
                if !ok {
                    return bad(format!("update of `{}` uses unbound symbol `{}`", self.table.name(s), self.table.name(sym)));
                }
            }
        }
        for (c, sch) in &self.controls {
            if !sch.covers(self.horizon) {
                return bad(format!("schedule of `{}` is shorter than the horizon {}", self.table.name(*c), self.horizon));
            }
        }
        Ok(())
    }

    pub fn control_values(&self, k: usize) -> Result<BTreeMap<SymbolId, f64>, AugmentationError> {
        self.controls.iter().map(|(s, sch)| Ok((*s, sch.value_at(k)?))).collect()
    }

    pub fn is_state(&self, s: SymbolId) -> bool {
        self.table.kind(s) == SymbolKind::State
    }
}

/// `y(k+1) = A_k y(k)` over state functionals `y`.
#[derive(Clone, Debug)]
pub struct AugmentedSystem {
    /// Products of powers and trig atoms of state symbols; the empty
    /// monomial is the constant 1.
    pub basis: Vec<Monomial>,
    /// Row `i`: `(j, A_ij)` with entries over disturbance and control symbols.
    pub transition: Vec<Vec<(usize, MtpExpr)>>,
    pub targets: Vec<SymbolId>,
}

impl AugmentedSystem {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn is_homogenized(&self) -> bool {
        self.basis.first().is_some_and(Monomial::is_one)
    }

    pub fn index_of(&self, m: &Monomial) -> Option<usize> {
        self.basis.iter().position(|b| b == m)
    }

    pub fn functional_names(&self, table: &SymbolTable) -> Vec<String> {
        self.basis.iter().map(|m| m.display(table).to_string()).collect()
    }

    /// Transition with controls replaced by their values at step `k`.
    pub fn numeric_transition(
        &self,
        controls: &BTreeMap<SymbolId, f64>,
    ) -> Vec<Vec<(usize, MtpExpr)>> {
        self.transition
            .iter()
            .map(|row| {
                row.iter()
                    .map(|(j, e)| (*j, e.substitute_values(controls)))
                    .filter(|(_, e)| !e.is_zero())
                    .collect()
            })
            .collect()
    }
}

fn functional_cmp(a: &Monomial, b: &Monomial, states: &[SymbolId]) -> Ordering {
    let lex = |m: &Monomial| -> Vec<(u32, u32, u32)> {
        states
            .iter()
            .map(|s| match m.factor(*s) {
                None => (0, 0, 0),
                Some(f) => {
                    let (c, si) = f.trig.map_or((0, 0), |t| (t.cos, t.sin));
                    (f.poly, c, si)
                }
            })
            .collect()
    };
    let scales = |m: &Monomial| -> Vec<(u64, u64)> {
        m.factors().iter().filter_map(|f| f.trig.map(|t| (t.scale.to_bits(), t.phase.to_bits()))).collect()
    };
    (a.has_trig(), Reverse(a.degree()), Reverse(lex(a)), scales(a)).cmp(&(b.has_trig(), Reverse(b.degree()), Reverse(lex(b)), scales(b)))
}

/// Linear decomposition of `g(f(x, u, ω))` over state functionals.
fn image_rows(
    g: &Monomial,
    spec: &SystemSpec,
) -> Result<BTreeMap<Monomial, MtpExpr>, AugmentationError> {
    let image = MtpExpr::from_monomial(g.clone(), 1.0).substitute_many(&spec.dynamics)?.prune(PRUNE_REL_TOL);
    let mut out: BTreeMap<Monomial, MtpExpr> = BTreeMap::new();
    for (m, c) in image.terms() {
        let (state, rest) = m.split(|s| spec.is_state(s));
        out.entry(state).or_default().add_assign(&MtpExpr::from_monomial(rest, c));
    }
    out.retain(|_, e| !e.is_zero());
    Ok(out)
}

pub fn close_system(spec: &SystemSpec, targets: &[SymbolId]) -> Result<AugmentedSystem, AugmentationError> {
    close_system_with(spec, targets, DEFAULT_MAX_ITERATIONS, DEFAULT_MAX_FUNCTIONALS)
}

pub fn close_system_with(
    spec: &SystemSpec,
    targets: &[SymbolId],
    max_iterations: usize,
    max_functionals: usize,
) -> Result<AugmentedSystem, AugmentationError> {
    spec.validate()?;
    if targets.is_empty() {
        return Err(AugmentationError::InvalidSpec("no target states".into()));
    }
    for t in targets {
        if !spec.states.contains(t) {
            return Err(AugmentationError::InvalidSpec(format!("target `{}` is not a state", spec.table.name(*t))));
        }
    }
    let mut found: Vec<Monomial> = Vec::new();
    let mut index: HashMap<Monomial, usize> = HashMap::new();
    let mut rows: Vec<BTreeMap<Monomial, MtpExpr>> = Vec::new();
    let mut frontier: VecDeque<usize> = VecDeque::new();
    for t in targets {
        let m = Monomial::symbol(*t);
        if !index.contains_key(&m) {
            index.insert(m.clone(), found.len());
            frontier.push_back(found.len());
            found.push(m);
        }
    }
    let mut generation = 0;
    while !frontier.is_empty() {
        if generation == max_iterations || found.len() > max_functionals {
            return Err(AugmentationError::ClosureDiverged { iterations: generation, functionals: found.len() });
        }
        let mut next = VecDeque::new();
        for i in frontier {
            let row = image_rows(&found[i], spec)?;
            for m in row.keys() {
                if m.degree() > MAX_FUNCTIONAL_DEGREE {
                    return Err(AugmentationError::ClosureDiverged { iterations: generation + 1, functionals: found.len() });
                }
                if !index.contains_key(m) {
                    index.insert(m.clone(), found.len());
                    next.push_back(found.len());
                    found.push(m.clone());
                }
            }
            if rows.len() <= i {
                rows.resize(i + 1, BTreeMap::new());
            }
            rows[i] = row;
        }
        frontier = next;
        generation += 1;
    }

    // constant first, then targets, then everything else
    let n_targets = targets.iter().collect::<std::collections::BTreeSet<_>>().len();
    let mut rest: Vec<usize> = (n_targets..found.len()).filter(|&i| !found[i].is_one()).collect();
    rest.sort_by(|&a, &b| functional_cmp(&found[a], &found[b], &spec.states));
    let mut order: Vec<usize> = Vec::with_capacity(found.len());
    if let Some(&one) = index.get(&Monomial::one()) {
        order.push(one);
    }
    order.extend(0..n_targets);
    order.extend(rest);
    let mut pos = vec![0; found.len()];
    for (new, &old) in order.iter().enumerate() {
        pos[old] = new;
    }
    let basis: Vec<Monomial> = order.iter().map(|&i| found[i].clone()).collect();
    let transition = order
        .iter()
        .map(|&i| {
            let mut r: Vec<(usize, MtpExpr)> = rows[i].iter().map(|(m, e)| (pos[index[m]], e.clone())).collect();
            r.sort_by_key(|(j, _)| *j);
            r
        })
        .collect();
    Ok(AugmentedSystem { basis, transition, targets: targets.to_vec() })
}

/// Number of degree-α monomials in `n` variables.
pub fn basis_size(n: usize, alpha: u32) -> u64 {
    binomial(n as u32 + alpha - 1, alpha)
}

/// All degree-α exponent vectors over `n` variables, in graded reverse
/// lexicographic order: `x1² , x1 x2, x1 x3, x2², x2 x3, x3²` for `n = 3, α = 2`.
pub fn moment_basis(n: usize, alpha: u32) -> Result<Vec<Vec<u32>>, AugmentationError> {
    moment_basis_capped(n, alpha, DEFAULT_BASIS_CAP)
}

pub fn moment_basis_capped(n: usize, alpha: u32, cap: usize) -> Result<Vec<Vec<u32>>, AugmentationError> {
    if n == 0 || alpha == 0 {
        return Err(AugmentationError::InvalidSpec("moment basis needs n >= 1 and order >= 1".into()));
    }
    let size = basis_size(n, alpha);
    if size > cap as u64 {
        return Err(AugmentationError::BasisTooLarge { size, cap });
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut cur = vec![0u32; n];
    fill(&mut cur, 0, alpha, &mut out);
    Ok(out)
}

fn fill(cur: &mut Vec<u32>, i: usize, left: u32, out: &mut Vec<Vec<u32>>) {
    if i + 1 == cur.len() {
        cur[i] = left;
        out.push(cur.clone());
        return;
    }
    for e in (0..=left).rev() {
        cur[i] = e;
        fill(cur, i + 1, left - e, out);
    }
    cur[i] = 0;
}

/// `A_mom_α(k)` for every step of the horizon.
#[derive(Clone, Debug)]
pub struct MomentSystem {
    pub order: u32,
    pub basis: Vec<Vec<u32>>,
    matrices: Vec<Arc<CsrMatrix>>,
}

impl MomentSystem {
    pub fn matrix(&self, k: usize) -> &CsrMatrix {
        &self.matrices[k]
    }

    pub fn steps(&self) -> usize {
        self.matrices.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn index_of(&self, exps: &[u32]) -> Option<usize> {
        self.basis.binary_search_by(|b| exps.cmp(b)).ok()
    }

    /// Number of distinct matrices over the horizon.
    pub fn distinct_matrices(&self) -> usize {
        let mut ptrs: Vec<*const CsrMatrix> = self.matrices.iter().map(Arc::as_ptr).collect();
        ptrs.sort();
        ptrs.dedup();
        ptrs.len()
    }
}

/// Monomial label like `[x]^2*[cos(theta)]`.
pub fn monomial_label(exps: &[u32], names: &[String]) -> String {
    let parts: Vec<String> = exps
        .iter()
        .zip(names)
        .filter(|(e, _)| **e > 0)
        .map(|(e, n)| if *e == 1 { format!("[{n}]") } else { format!("[{n}]^{e}") })
        .collect();
    parts.join("*")
}

pub fn build_moment_system(
    aug: &AugmentedSystem,
    alpha: u32,
    spec: &SystemSpec,
) -> Result<MomentSystem, AugmentationError> {
    build_moment_system_capped(aug, alpha, spec, DEFAULT_BASIS_CAP)
}

pub fn build_moment_system_capped(
    aug: &AugmentedSystem,
    alpha: u32,
    spec: &SystemSpec,
    cap: usize,
) -> Result<MomentSystem, AugmentationError> {
    let basis = moment_basis_capped(aug.len(), alpha, cap)?;
    let (keys, per_step) = control_keys(spec)?;
    let built: Vec<Arc<CsrMatrix>> = keys
        .par_iter()
        .map(|controls| {
            let rows = aug.numeric_transition(controls);
            let m = match packed::build(&rows, &basis, alpha, &spec.disturbances)? {
                Some(m) => m,
                None => reference::build_from_rows(&rows, &basis, alpha, &spec.table, &spec.disturbances)?,
            };
            Ok(Arc::new(m))
        })
        .collect::<Result<_, AugmentationError>>()?;
    let matrices = per_step.into_iter().map(|i| Arc::clone(&built[i])).collect();
    Ok(MomentSystem { order: alpha, basis, matrices })
}

/// Distinct control assignments over the horizon and the assignment used at each step.
pub(crate) fn control_keys(
    spec: &SystemSpec,
) -> Result<(Vec<BTreeMap<SymbolId, f64>>, Vec<usize>), AugmentationError> {
    let mut keys: Vec<BTreeMap<SymbolId, f64>> = Vec::new();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut per_step = Vec::with_capacity(spec.horizon);
    for k in 0..spec.horizon {
        let values = spec.control_values(k)?;
        let bits: Vec<u64> = values.values().map(|v| v.to_bits()).collect();
        let i = *seen.entry(bits).or_insert_with(|| {
            keys.push(values);
            keys.len() - 1
        });
        per_step.push(i);
    }
    Ok((keys, per_step))
}

impl fmt::Display for AugmentedSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} functionals", self.basis.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{lower, parse_expr};

    pub(crate) fn example5(v: f64) -> SystemSpec {
        let mut table = SymbolTable::new();
        let x = table.declare("x", SymbolKind::State).unwrap();
        let th = table.declare("theta", SymbolKind::State).unwrap();
        let w = table.declare("w", SymbolKind::Disturbance).unwrap();
        let u = table.declare("v", SymbolKind::Control).unwrap();
        let c = HashMap::new();
        let l = |s: &str| lower(&parse_expr(s).unwrap(), &table, &c).unwrap();
        SystemSpec {
            dynamics: BTreeMap::from([(x, l("x + v*cos(theta)")), (th, l("theta + w"))]),
            disturbances: BTreeMap::from([(w, Distribution::gamma(1.0, 2.0).unwrap())]),
            controls: BTreeMap::from([(u, Schedule::Constant(v))]),
            initial: BTreeMap::from([
                (x, Distribution::uniform(-0.1, 0.1).unwrap()),
                (th, Distribution::normal(0.0, 1.0).unwrap()),
            ]),
            states: vec![x, th],
            horizon: 6,
            table,
        }
    }

    #[test]
    fn grevlex_examples() {
        let b = moment_basis(3, 2).unwrap();
        assert_eq!(b, vec![vec![2, 0, 0], vec![1, 1, 0], vec![1, 0, 1], vec![0, 2, 0], vec![0, 1, 1], vec![0, 0, 2]]);
        assert_eq!(moment_basis(1, 5).unwrap(), vec![vec![5]]);
        assert_eq!(moment_basis(4, 3).unwrap().len(), 20);
        assert!(matches!(moment_basis_capped(9, 6, 3000), Err(AugmentationError::BasisTooLarge { size: 3003, .. })));
    }

    #[test]
    fn example5_closure() {
        let spec = example5(0.5);
        let aug = close_system(&spec, &[spec.states[0]]).unwrap();
        assert_eq!(aug.functional_names(&spec.table), vec!["x", "cos(theta)", "sin(theta)"]);
        assert!(!aug.is_homogenized());
        let ctrl = spec.control_values(0).unwrap();
        let rows = aug.numeric_transition(&ctrl);
        assert_eq!(rows[0].len(), 2);
        assert_eq!(rows[0][0].1, MtpExpr::constant(1.0));
        assert_eq!(rows[0][1].1, MtpExpr::constant(0.5));
    }

    #[test]
    fn example5_moment_matrices() {
        let spec = example5(0.5);
        let aug = close_system(&spec, &[spec.states[0]]).unwrap();
        // E[cos ω] and E[sin ω] for Γ(1, 2): 1/(1 + 4), 2/(1 + 4)
        let (mc, ms) = (0.2, 0.4);
        let m1 = build_moment_system(&aug, 1, &spec).unwrap();
        let a = m1.matrix(0).to_dense();
        let want = [[1.0, 0.5, 0.0], [0.0, mc, -ms], [0.0, ms, mc]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - want[i][j]).abs() < 1e-14, "({i},{j})");
            }
        }
        // entry m_{c²} − m_{s²} = E[cos 2ω] = 1/(1 + 16)
        let m2 = build_moment_system(&aug, 2, &spec).unwrap();
        let a2 = m2.matrix(0).to_dense();
        let ics = m2.index_of(&[0, 1, 1]).unwrap();
        assert!((a2[ics][ics] - 1.0 / 17.0).abs() < 1e-14);
        assert_eq!(m2.distinct_matrices(), 1);
    }

    #[test]
    fn packed_matches_symbolic_reference() {
        let spec = example5(0.5);
        let aug = close_system(&spec, &[spec.states[0]]).unwrap();
        for alpha in 1..=4 {
            let fast = build_moment_system(&aug, alpha, &spec).unwrap();
            let slow = build_moment_system_symbolic(&aug, alpha, &spec).unwrap();
            let (a, b) = (fast.matrix(0).to_dense(), slow.matrix(0).to_dense());
            for (ra, rb) in a.iter().zip(&b) {
                for (x, y) in ra.iter().zip(rb) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn divergent_system_is_reported() {
        let mut table = SymbolTable::new();
        let x = table.declare("x", SymbolKind::State).unwrap();
        let c = HashMap::new();
        let f = lower(&parse_expr("x^2").unwrap(), &table, &c).unwrap();
        let spec = SystemSpec {
            dynamics: BTreeMap::from([(x, f)]),
            disturbances: BTreeMap::new(),
            controls: BTreeMap::new(),
            initial: BTreeMap::from([(x, Distribution::point(0.5).unwrap())]),
            states: vec![x],
            horizon: 1,
            table,
        };
        assert!(matches!(close_system(&spec, &[x]), Err(AugmentationError::ClosureDiverged { .. })));
    }

    #[test]
    fn affine_dynamics_are_homogenized() {
        let mut table = SymbolTable::new();
        let x = table.declare("x", SymbolKind::State).unwrap();
        let w = table.declare("w", SymbolKind::Disturbance).unwrap();
        let c = HashMap::new();
        let f = lower(&parse_expr("0.5*x + w + 1").unwrap(), &table, &c).unwrap();
        let spec = SystemSpec {
            dynamics: BTreeMap::from([(x, f)]),
            disturbances: BTreeMap::from([(w, Distribution::normal(0.0, 1.0).unwrap())]),
            controls: BTreeMap::new(),
            initial: BTreeMap::from([(x, Distribution::point(0.0).unwrap())]),
            states: vec![x],
            horizon: 3,
            table,
        };
        let aug = close_system(&spec, &[x]).unwrap();
        assert!(aug.is_homogenized());
        assert_eq!(aug.len(), 2);
        for alpha in 1..=3 {
            let m = build_moment_system(&aug, alpha, &spec).unwrap();
            let a = m.matrix(0).to_dense();
            let one = m.index_of(&[alpha, 0]).unwrap();
            for (j, v) in a[one].iter().enumerate() {
                assert_eq!(*v, if j == one { 1.0 } else { 0.0 });
            }
        }
    }
}
