use nalgebra::{DMatrix, DVector};

use super::{control_slots, noise_moments, BaselineError, GaussianBelief, PIVOT_TOL};
use crate::algebra::{CompiledSystem, MtpExpr, Scratch, SymbolId};
use crate::augmentation::SystemSpec;

/// `κ = 3 − n` for an augmented dimension `n`.
pub fn default_kappa(n: usize) -> f64 {
    3.0 - n as f64
}

/// Lower-triangular `L` with `L Lᵀ = P` for symmetric positive semidefinite `P`.
///
/// Columns whose pivot falls below `PIVOT_TOL` times the largest diagonal
/// entry are set to zero, so singular covariances (point masses) factor.
pub fn semidefinite_cholesky(p: &DMatrix<f64>) -> Result<DMatrix<f64>, BaselineError> {
    let n = p.nrows();
    let scale = (0..n).map(|i| p[(i, i)].abs()).fold(0.0, f64::max);
    let tol = PIVOT_TOL * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = p[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(BaselineError::CholeskyFailure { col: j, pivot: d });
        }
        if d <= tol {
            continue;
        }
        let r = d.sqrt();
        l[(j, j)] = r;
        for i in j + 1..n {
            let mut s = p[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / r;
        }
    }
    Ok(l)
}

/// `2n + 1` sigma points with their weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaSet {
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub kappa: f64,
}

impl SigmaSet {
    pub fn new(mean: &DVector<f64>, cov: &DMatrix<f64>, kappa: f64) -> Result<Self, BaselineError> {
        let n = mean.len();
        let spread = n as f64 + kappa;
        if spread <= 0.0 {
            return Err(BaselineError::InvalidInput(format!("n + κ = {spread} must be positive")));
        }
        let l = semidefinite_cholesky(cov)? * spread.sqrt();
        let mut points = Vec::with_capacity(2 * n + 1);
        let mut weights = Vec::with_capacity(2 * n + 1);
        points.push(mean.clone());
        weights.push(kappa / spread);
        for i in 0..n {
            points.push(mean + l.column(i));
            weights.push(0.5 / spread);
        }
        for i in 0..n {
            points.push(mean - l.column(i));
            weights.push(0.5 / spread);
        }
        Ok(SigmaSet { points, weights, kappa })
    }

    pub fn mean(&self) -> DVector<f64> {
        let n = self.points[0].len();
        self.points.iter().zip(&self.weights).fold(DVector::zeros(n), |acc, (p, w)| acc + p * *w)
    }
}

/// Unscented propagation over the state augmented with the disturbances.
#[derive(Clone, Debug)]
pub struct Unscented {
    states: Vec<SymbolId>,
    noise: Vec<SymbolId>,
    noise_mean: DVector<f64>,
    noise_var: DVector<f64>,
    f: CompiledSystem,
    pub kappa: f64,
}

impl Unscented {
    pub fn new(spec: &SystemSpec, kappa: Option<f64>) -> Self {
        let (noise, noise_mean, noise_var) = noise_moments(spec);
        let exprs: Vec<MtpExpr> = spec.states.iter().map(|s| spec.dynamics[s].clone()).collect();
        let kappa = kappa.unwrap_or_else(|| default_kappa(spec.states.len() + noise.len()));
        Unscented { states: spec.states.clone(), noise, noise_mean, noise_var, f: CompiledSystem::new(&exprs), kappa }
    }

    pub fn step(&self, spec: &SystemSpec, belief: &GaussianBelief, k: usize) -> Result<GaussianBelief, BaselineError> {
        let (nx, nw) = (self.states.len(), self.noise.len());
        let n = nx + nw;
        let mut mean = DVector::zeros(n);
        mean.rows_mut(0, nx).copy_from(&belief.mean);
        mean.rows_mut(nx, nw).copy_from(&self.noise_mean);
        let mut cov = DMatrix::zeros(n, n);
        cov.view_mut((0, 0), (nx, nx)).copy_from(&belief.cov);
        for i in 0..nw {
            cov[(nx + i, nx + i)] = self.noise_var[i];
        }
        let sigma = SigmaSet::new(&mean, &cov, self.kappa)?;
        let mut slots = control_slots(spec, k)?;
        let mut scratch = Scratch::default();
        let mut out = vec![0.0; nx];
        let ys: Vec<DVector<f64>> = sigma
            .points
            .iter()
            .map(|p| {
                for (i, s) in self.states.iter().chain(&self.noise).enumerate() {
                    slots[s.0 as usize] = p[i];
                }
                self.f.eval_into(&slots, &mut out, &mut scratch);
                DVector::from_column_slice(&out)
            })
            .collect();
        let ybar = ys.iter().zip(&sigma.weights).fold(DVector::zeros(nx), |acc, (y, w)| acc + y * *w);
        let mut p = DMatrix::zeros(nx, nx);
        for (y, w) in ys.iter().zip(&sigma.weights) {
            let d = y - &ybar;
            p += &d * d.transpose() * *w;
        }
        Ok(GaussianBelief { mean: ybar, cov: p }.symmetrize())
    }
}

pub fn unscented_propagate(
    spec: &SystemSpec,
    belief: &GaussianBelief,
    k: usize,
    kappa: Option<f64>,
) -> Result<GaussianBelief, BaselineError> {
    Unscented::new(spec, kappa).step(spec, belief, k)
}

pub fn unscented_trajectory(spec: &SystemSpec, n: usize, kappa: Option<f64>) -> Result<Vec<GaussianBelief>, BaselineError> {
    let ut = Unscented::new(spec, kappa);
    let mut out = vec![GaussianBelief::from_initial(spec)];
    for k in 0..n {
        let next = ut.step(spec, &out[k], k)?;
        out.push(next);
    }
    Ok(out)
}
