//! Reference propagation methods: first-order linearization, the unscented
//! transform and Monte Carlo rollouts.
//!
//! Linear and unscented propagation only see the mean and variance of each
//! law (a moment-matched Gaussian belief).

mod linear;
mod monte_carlo;
mod unscented;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::algebra::SymbolId;
use crate::augmentation::{AugmentationError, SystemSpec};

pub use linear::{linear_propagate, linear_trajectory, Linearization};
pub use monte_carlo::{monte_carlo, MonteCarloOrder, MonteCarloResult, CHUNK_SIZE};
pub use unscented::{default_kappa, semidefinite_cholesky, unscented_propagate, unscented_trajectory, SigmaSet, Unscented};

/// Pivots below this fraction of the largest diagonal entry count as zero.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("covariance is not positive semidefinite (pivot {pivot} at column {col})")]
    CholeskyFailure { col: usize, pivot: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Augmentation(#[from] AugmentationError),
}

/// Mean and covariance over the states of a system, in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, BaselineError> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(BaselineError::InvalidInput("covariance shape does not match the mean".into()));
        }
        Ok(GaussianBelief { mean, cov })
    }

    /// Independent initial laws summarized by their mean and variance.
    pub fn from_initial(spec: &SystemSpec) -> Self {
        let mean = DVector::from_iterator(spec.states.len(), spec.states.iter().map(|s| spec.initial[s].mean()));
        let var = DVector::from_iterator(spec.states.len(), spec.states.iter().map(|s| spec.initial[s].variance()));
        GaussianBelief { mean, cov: DMatrix::from_diagonal(&var) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.cov[(i, i)]
    }

    /// Restores exact symmetry after round-off.
    pub(crate) fn symmetrize(mut self) -> Self {
        let t = self.cov.transpose();
        self.cov = (&self.cov + t) * 0.5;
        self
    }
}

/// Disturbance means and variances in symbol order.
pub(crate) fn noise_moments(spec: &SystemSpec) -> (Vec<SymbolId>, DVector<f64>, DVector<f64>) {
    let syms: Vec<SymbolId> = spec.disturbances.keys().copied().collect();
    let mean = DVector::from_iterator(syms.len(), syms.iter().map(|s| spec.disturbances[s].mean()));
    let var = DVector::from_iterator(syms.len(), syms.iter().map(|s| spec.disturbances[s].variance()));
    (syms, mean, var)
}

/// Value slots indexed by symbol id, with controls of step `k` filled in.
pub(crate) fn control_slots(spec: &SystemSpec, k: usize) -> Result<Vec<f64>, BaselineError> {
    let mut v = vec![0.0; spec.table.len()];
    for (s, x) in spec.control_values(k)? {
        v[s.0 as usize] = x;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{lower, parse_expr, SymbolKind, SymbolTable};
    use crate::distributions::Distribution;
    use std::collections::{BTreeMap, HashMap};

    fn linear_system() -> SystemSpec {
        let mut table = SymbolTable::new();
        let x = table.declare("x", SymbolKind::State).unwrap();
        let y = table.declare("y", SymbolKind::State).unwrap();
        let w = table.declare("w", SymbolKind::Disturbance).unwrap();
        let c = HashMap::new();
        let l = |s: &str| lower(&parse_expr(s).unwrap(), &table, &c).unwrap();
        SystemSpec {
            dynamics: BTreeMap::from([(x, l("0.9*x + 0.2*y + w")), (y, l("-0.1*x + y + 0.5*w"))]),
            disturbances: BTreeMap::from([(w, Distribution::uniform(-1.0, 2.0).unwrap())]),
            controls: BTreeMap::new(),
            initial: BTreeMap::from([
                (x, Distribution::normal(1.0, 0.3).unwrap()),
                (y, Distribution::point(-0.5).unwrap()),
            ]),
            states: vec![x, y],
            horizon: 4,
            table,
        }
    }

    #[test]
    fn sigma_weights_sum_to_one_and_recover_moments() {
        let mean = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let s = SigmaSet::new(&mean, &cov, default_kappa(3)).unwrap();
        assert_eq!(s.points.len(), 7);
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((s.mean() - &mean).norm() < 1e-14);
        let mut c = DMatrix::zeros(3, 3);
        for (p, w) in s.points.iter().zip(&s.weights) {
            let d = p - &mean;
            c += &d * d.transpose() * *w;
        }
        assert!((c - cov).norm() < 1e-13);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(semidefinite_cholesky(&p), Err(BaselineError::CholeskyFailure { col: 1, .. })));
    }

    #[test]
    fn linear_map_is_exact_for_both_baselines() {
        let spec = linear_system();
        let lin = linear_trajectory(&spec, 4).unwrap();
        let ut = unscented_trajectory(&spec, 4, None).unwrap();
        // exact mean and covariance by direct recursion
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 1.0]);
        let g = DVector::from_vec(vec![1.0, 0.5]);
        let (mw, vw) = (0.5, 0.75);
        let mut m = DVector::from_vec(vec![1.0, -0.5]);
        let mut p = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.0]));
        for k in 1..=4 {
            m = &a * &m + &g * mw;
            p = &a * &p * a.transpose() + &g * g.transpose() * vw;
            assert!((&lin[k].mean - &m).norm() < 1e-12);
            assert!((&lin[k].cov - &p).norm() < 1e-12);
            assert!((&ut[k].mean - &m).norm() < 1e-12);
            assert!((&ut[k].cov - &p).norm() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let spec = linear_system();
        let x = spec.states[0];
        let a = monte_carlo(&spec, &[x], &[1, 2], 3, 20_000, 7).unwrap();
        let b = monte_carlo(&spec, &[x], &[1, 2], 3, 20_000, 7).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo(&spec, &[x], &[1, 2], 3, 20_000, 8).unwrap();
        assert_ne!(a.orders[&1].mean, c.orders[&1].mean);
    }

    #[test]
    fn deterministic_system_has_zero_error() {
        let mut spec = linear_system();
        let (x, y) = (spec.states[0], spec.states[1]);
        spec.initial.insert(x, Distribution::point(1.0).unwrap());
        let w = *spec.disturbances.keys().next().unwrap();
        spec.disturbances.insert(w, Distribution::point(0.0).unwrap());
        let r = monte_carlo(&spec, &[x, y], &[1], 2, 100, 1).unwrap();
        assert_eq!(r.orders[&1].std_error[2], vec![0.0, 0.0]);
        // x(2) = 0.9 (0.9 - 0.1) + 0.2 (-0.1 - 0.5)
        assert!((r.orders[&1].mean[2][0] - (0.9 * 0.8 + 0.2 * -0.6)).abs() < 1e-15);
    }
}
