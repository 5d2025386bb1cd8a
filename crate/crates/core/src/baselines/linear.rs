use nalgebra::DMatrix;

use super::{control_slots, noise_moments, BaselineError, GaussianBelief};
use crate::algebra::{CompiledSystem, MtpExpr, SymbolId};
use crate::augmentation::SystemSpec;

/// Dynamics and their analytic Jacobians, compiled once.
#[derive(Clone, Debug)]
pub struct Linearization {
    states: Vec<SymbolId>,
    noise: Vec<SymbolId>,
    noise_mean: Vec<f64>,
    noise_cov: DMatrix<f64>,
    f: CompiledSystem,
    // row-major ∂f_i/∂x_j then ∂f_i/∂ω_j
    jac_x: CompiledSystem,
    jac_w: CompiledSystem,
}

impl Linearization {
    pub fn new(spec: &SystemSpec) -> Self {
        let (noise, mean, var) = noise_moments(spec);
        let dyn_exprs: Vec<MtpExpr> = spec.states.iter().map(|s| spec.dynamics[s].clone()).collect();
        let jx: Vec<MtpExpr> =
            dyn_exprs.iter().flat_map(|f| spec.states.iter().map(move |x| f.derivative(*x))).collect();
        let jw: Vec<MtpExpr> = dyn_exprs.iter().flat_map(|f| noise.iter().map(move |w| f.derivative(*w))).collect();
        Linearization {
            states: spec.states.clone(),
            noise_mean: mean.iter().copied().collect(),
            noise_cov: DMatrix::from_diagonal(&var),
            noise,
            f: CompiledSystem::new(&dyn_exprs),
            jac_x: CompiledSystem::new(&jx),
            jac_w: CompiledSystem::new(&jw),
        }
    }

    /// `x̂' = f(x̂, u, E ω)`, `P' = A P Aᵀ + G Q Gᵀ` with Jacobians at the means.
    pub fn step(&self, spec: &SystemSpec, belief: &GaussianBelief, k: usize) -> Result<GaussianBelief, BaselineError> {
        let mut v = control_slots(spec, k)?;
        for (i, s) in self.states.iter().enumerate() {
            v[s.0 as usize] = belief.mean[i];
        }
        for (i, s) in self.noise.iter().enumerate() {
            v[s.0 as usize] = self.noise_mean[i];
        }
        let n = self.states.len();
        let m = self.noise.len();
        let mean = nalgebra::DVector::from_vec(self.f.eval(&v));
        let a = DMatrix::from_row_slice(n, n, &self.jac_x.eval(&v));
        let g = DMatrix::from_row_slice(n, m, &self.jac_w.eval(&v));
        let cov = &a * &belief.cov * a.transpose() + &g * &self.noise_cov * g.transpose();
        Ok(GaussianBelief { mean, cov }.symmetrize())
    }
}

pub fn linear_propagate(spec: &SystemSpec, belief: &GaussianBelief, k: usize) -> Result<GaussianBelief, BaselineError> {
    Linearization::new(spec).step(spec, belief, k)
}

/// Beliefs at `k = 0..=n` starting from the moment-matched initial laws.
pub fn linear_trajectory(spec: &SystemSpec, n: usize) -> Result<Vec<GaussianBelief>, BaselineError> {
    let lin = Linearization::new(spec);
    let mut out = vec![GaussianBelief::from_initial(spec)];
    for k in 0..n {
        let next = lin.step(spec, &out[k], k)?;
        out.push(next);
    }
    Ok(out)
}
