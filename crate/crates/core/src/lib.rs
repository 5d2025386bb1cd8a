//! Exact moment propagation for discrete-time stochastic systems whose
//! nonlinearities are mixed trigonometric polynomials.

pub mod algebra;
pub mod augmentation;
pub mod baselines;
pub mod distributions;
pub mod moments;
pub mod propagation;
pub mod scenario;
