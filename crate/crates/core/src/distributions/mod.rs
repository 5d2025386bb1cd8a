//! Univariate laws described through their characteristic functions.
//!
//! Every law exposes `Φ(t) = E[exp(i t X)]` and exact derivatives of `Φ` of
//! any order up to a cap, computed with complex Taylor jets. Raw moments,
//! trigonometric moments and mixed moments are all derived from these jets.
//!
//! Normal laws are parameterized by *variance*. Gamma laws use shape and
//! scale, so `gamma(1, 2)` has mean 2.

mod jet;
mod sampling;

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use jet::Jet;
pub use sampling::{stream_for_chunk, RngStream};

/// Default cap on the derivative order of characteristic-function jets.
pub const DEFAULT_MAX_ORDER: usize = 16;

/// Kummer series stop when a term falls below this fraction of the partial sum.
const KUMMER_REL_TOL: f64 = 1e-14;
const KUMMER_MAX_TERMS: usize = 500;

/// Largest imaginary part tolerated when a real moment is read from a jet.
pub const RESIDUE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("Kummer series for the Beta characteristic function did not converge at t = {t} within {terms} terms")]
    SeriesDivergence { t: f64, terms: usize },
    #[error("derivative order {order} exceeds the configured maximum {max}")]
    OrderTooHigh { order: usize, max: usize },
    #[error("imaginary residue {residue:e} exceeds tolerance for a real moment")]
    ResidueTooLarge { residue: f64 },
}

/// The base family of a law, before any affine transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Law {
    Normal { mean: f64, variance: f64 },
    Uniform { lower: f64, upper: f64 },
    Beta { a: f64, b: f64 },
    Gamma { shape: f64, scale: f64 },
}

/// A univariate law `Y = scale * X + shift` with `X` drawn from `law`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub law: Law,
    pub scale: f64,
    pub shift: f64,
}

/// Value and derivatives `[Φ(t), Φ'(t), ..., Φ^(d)(t)]` at a base point.
#[derive(Clone, Debug, PartialEq)]
pub struct CfJet {
    pub t: f64,
    pub derivatives: Vec<Complex64>,
}

impl CfJet {
    pub fn order(&self) -> usize {
        self.derivatives.len() - 1
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), DistributionError> {
    if ok {
        Ok(())
    } else {
        Err(DistributionError::InvalidParameter(msg()))
    }
}

impl Distribution {
    pub fn new(law: Law) -> Result<Self, DistributionError> {
        match law {
            Law::Normal { mean, variance } => {
                check(mean.is_finite(), || format!("normal mean {mean} is not finite"))?;
                check(variance.is_finite() && variance >= 0.0, || {
                    format!("normal variance must be >= 0, got {variance}")
                })?;
            }
            Law::Uniform { lower, upper } => {
                check(lower.is_finite() && upper.is_finite() && upper > lower, || {
                    format!("uniform requires lower < upper, got [{lower}, {upper}]")
                })?;
            }
            Law::Beta { a, b } => {
                check(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(), || {
                    format!("beta parameters must be positive, got ({a}, {b})")
                })?;
            }
            Law::Gamma { shape, scale } => {
                check(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite(), || {
                    format!("gamma shape and scale must be positive, got ({shape}, {scale})")
                })?;
            }
        }
        Ok(Distribution { law, scale: 1.0, shift: 0.0 })
    }

    pub fn normal(mean: f64, variance: f64) -> Result<Self, DistributionError> {
        Self::new(Law::Normal { mean, variance })
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self, DistributionError> {
        Self::new(Law::Uniform { lower, upper })
    }

    pub fn beta(a: f64, b: f64) -> Result<Self, DistributionError> {
        Self::new(Law::Beta { a, b })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self, DistributionError> {
        Self::new(Law::Gamma { shape, scale })
    }

    /// A point mass at `value` (a zero-variance normal).
    pub fn point(value: f64) -> Result<Self, DistributionError> {
        Self::normal(value, 0.0)
    }

    /// The law of `scale * Y + shift` where `Y` is `self`.
    pub fn affine(self, scale: f64, shift: f64) -> Result<Self, DistributionError> {
        check(scale.is_finite() && shift.is_finite(), || {
            format!("affine scale and shift must be finite, got ({scale}, {shift})")
        })?;
        Ok(Distribution {
            law: self.law,
            scale: self.scale * scale,
            shift: self.shift * scale + shift,
        })
    }

    pub fn is_affine(&self) -> bool {
        self.scale != 1.0 || self.shift != 0.0
    }

    pub fn mean(&self) -> f64 {
        let m = match self.law {
            Law::Normal { mean, .. } => mean,
            Law::Uniform { lower, upper } => 0.5 * (lower + upper),
            Law::Beta { a, b } => a / (a + b),
            Law::Gamma { shape, scale } => shape * scale,
        };
        self.scale * m + self.shift
    }

    pub fn variance(&self) -> f64 {
        let v = match self.law {
            Law::Normal { variance, .. } => variance,
            Law::Uniform { lower, upper } => (upper - lower).powi(2) / 12.0,
            Law::Beta { a, b } => a * b / ((a + b).powi(2) * (a + b + 1.0)),
            Law::Gamma { shape, scale } => shape * scale * scale,
        };
        self.scale * self.scale * v
    }

    /// Closed support interval; unbounded ends are infinite.
    pub fn support(&self) -> (f64, f64) {
        let (l, u) = match self.law {
            Law::Normal { mean, variance } if variance == 0.0 => (mean, mean),
            Law::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Law::Uniform { lower, upper } => (lower, upper),
            Law::Beta { .. } => (0.0, 1.0),
            Law::Gamma { .. } => (0.0, f64::INFINITY),
        };
        let (a, b) = (self.scale * l + self.shift, self.scale * u + self.shift);
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        // 0 * inf above yields NaN for degenerate scales
        if self.scale == 0.0 {
            (self.shift, self.shift)
        } else {
            (a, b)
        }
    }

    /// `Φ(t)`.
    pub fn cf_eval(&self, t: f64) -> Result<Complex64, DistributionError> {
        Ok(self.jet(t, 0)?.value())
    }

    /// `[Φ(t), ..., Φ^(order)(t)]` with the default order cap.
    pub fn cf_jet(&self, t: f64, order: usize) -> Result<CfJet, DistributionError> {
        self.cf_jet_capped(t, order, DEFAULT_MAX_ORDER)
    }

    pub fn cf_jet_capped(&self, t: f64, order: usize, max_order: usize) -> Result<CfJet, DistributionError> {
        if order > max_order {
            return Err(DistributionError::OrderTooHigh { order, max: max_order });
        }
        Ok(CfJet { t, derivatives: self.jet(t, order)?.derivatives() })
    }

    /// `E[X^n]`.
    pub fn raw_moment(&self, n: usize) -> Result<f64, DistributionError> {
        let jet = self.cf_jet(0.0, n)?;
        // i^{-n} Φ^(n)(0)
        let m = jet.derivatives[n] * Complex64::i().powu(n as u32).inv();
        if m.im.abs() > RESIDUE_TOL * m.re.abs().max(1.0) {
            return Err(DistributionError::ResidueTooLarge { residue: m.im.abs() });
        }
        Ok(m.re)
    }

    pub(crate) fn jet(&self, t: f64, order: usize) -> Result<Jet, DistributionError> {
        let base = law_jet(&self.law, self.scale * t, order)?.rescale_argument(self.scale);
        if self.shift == 0.0 {
            return Ok(base);
        }
        // e^{i c t}
        let c = self.shift;
        let phase = Jet::exp_of(&[Complex64::new(0.0, c * t), Complex64::new(0.0, c)], order);
        Ok(phase.mul(&base))
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let x = match self.law {
            Law::Normal { mean, variance } => {
                if variance == 0.0 {
                    mean
                } else {
                    mean + variance.sqrt() * rng.standard_normal()
                }
            }
            Law::Uniform { lower, upper } => lower + (upper - lower) * rng.uniform(),
            Law::Beta { a, b } => {
                let x = rng.gamma(a);
                let y = rng.gamma(b);
                x / (x + y)
            }
            Law::Gamma { shape, scale } => scale * rng.gamma(shape),
        };
        self.scale * x + self.shift
    }
}

fn law_jet(law: &Law, t: f64, order: usize) -> Result<Jet, DistributionError> {
    let z = |re: f64, im: f64| Complex64::new(re, im);
    match *law {
        Law::Normal { mean, variance } => {
            // exponent i μ t - v t²/2 expanded around t
            let poly = [
                z(-0.5 * variance * t * t, mean * t),
                z(-variance * t, mean),
                z(-0.5 * variance, 0.0),
            ];
            Ok(Jet::exp_of(&poly, order))
        }
        Law::Gamma { shape, scale } => {
            // (a + b h)^{-k} = a^{-k} Σ_j binom(-k, j) (b/a)^j h^j
            let a = z(1.0, -scale * t);
            let ratio = z(0.0, -scale) / a;
            let lead = if t == 0.0 { z(1.0, 0.0) } else { (-shape * a.ln()).exp() };
            let mut coeffs = Vec::with_capacity(order + 1);
            let mut c = lead;
            coeffs.push(c);
            for j in 1..=order {
                c = c * ratio * ((-shape - (j as f64 - 1.0)) / j as f64);
                coeffs.push(c);
            }
            Ok(Jet::from_coeffs(coeffs))
        }
        Law::Uniform { lower, upper } => {
            // X = l + w S with S ~ U(0, 1); Φ_S^(j)(τ) = i^j ∫_0^1 s^j e^{iτs} ds
            let w = upper - lower;
            let tau = w * t;
            let integrals = unit_uniform_integrals(tau, order);
            let mut fact = 1.0;
            let mut ipow = z(1.0, 0.0);
            let mut coeffs = Vec::with_capacity(order + 1);
            for (j, int) in integrals.into_iter().enumerate() {
                if j > 0 {
                    fact *= j as f64;
                    ipow *= Complex64::i();
                }
                coeffs.push(ipow * int / fact);
            }
            let unit = Jet::from_coeffs(coeffs).rescale_argument(w);
            if lower == 0.0 {
                return Ok(unit);
            }
            let phase = Jet::exp_of(&[z(0.0, lower * t), z(0.0, lower)], order);
            Ok(phase.mul(&unit))
        }
        Law::Beta { a, b } => {
            // d^j/dt^j 1F1(a; a+b; it) = i^j (a)_j/(a+b)_j 1F1(a+j; a+b+j; it)
            let c = a + b;
            let arg = z(0.0, t);
            let mut coeffs = Vec::with_capacity(order + 1);
            let mut pref = z(1.0, 0.0);
            for j in 0..=order {
                if j > 0 {
                    let jf = (j - 1) as f64;
                    pref = pref * Complex64::i() * ((a + jf) / (c + jf)) / j as f64;
                }
                let m = kummer(a + j as f64, c + j as f64, arg)?;
                coeffs.push(pref * m);
            }
            Ok(Jet::from_coeffs(coeffs))
        }
    }
}

/// `I_j(τ) = ∫_0^1 s^j e^{iτs} ds` for `j = 0..=order`.
///
/// Uses the upward recurrence `I_j = (e^{iτ} - j I_{j-1}) / (iτ)` while it is
/// stable (`j + 1 <= |τ|`) and the convergent series
/// `I_j = e^{iτ} Σ_n (-iτ)^n / ((j+1)...(j+n+1))` otherwise.
fn unit_uniform_integrals(tau: f64, order: usize) -> Vec<Complex64> {
    let e = Complex64::new(tau.cos(), tau.sin());
    let itau = Complex64::new(0.0, tau);
    let mut out: Vec<Complex64> = Vec::with_capacity(order + 1);
    for j in 0..=order {
        let jf = j as f64;
        if jf + 1.0 <= tau.abs() {
            let prev = if j == 0 { Complex64::new(1.0, 0.0) } else { out[j - 1] * jf };
            out.push((e - prev) / itau);
        } else {
            let step = -itau;
            let mut term = Complex64::new(1.0 / (jf + 1.0), 0.0);
            let mut sum = term;
            for n in 1..2000 {
                term = term * step / (jf + n as f64 + 1.0);
                sum += term;
                if term.norm() <= 1e-17 * sum.norm() {
                    break;
                }
            }
            out.push(e * sum);
        }
    }
    out
}

/// Kummer's confluent hypergeometric series `1F1(a; c; z)`.
fn kummer(a: f64, c: f64, z: Complex64) -> Result<Complex64, DistributionError> {
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for n in 0..KUMMER_MAX_TERMS {
        let nf = n as f64;
        term = term * z * ((a + nf) / ((c + nf) * (nf + 1.0)));
        sum += term;
        if term.norm() < KUMMER_REL_TOL * sum.norm() {
            return Ok(sum);
        }
    }
    Err(DistributionError::SeriesDivergence { t: z.im, terms: KUMMER_MAX_TERMS })
}

fn fmt_num(x: f64) -> String {
    if x == PI {
        "pi".to_string()
    } else {
        format!("{x}")
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Law::Normal { mean, variance } => write!(f, "normal({}, {})", fmt_num(mean), fmt_num(variance)),
            Law::Uniform { lower, upper } => write!(f, "uniform({}, {})", fmt_num(lower), fmt_num(upper)),
            Law::Beta { a, b } => write!(f, "beta({}, {})", fmt_num(a), fmt_num(b)),
            Law::Gamma { shape, scale } => write!(f, "gamma({}, {})", fmt_num(shape), fmt_num(scale)),
        }
    }
}

/// Scenario literal syntax, e.g. `affine(0.9, 0.5, beta(0.75, 0.75))`.
impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_affine() {
            write!(f, "affine({}, {}, {})", fmt_num(self.scale), fmt_num(self.shift), self.law)
        } else {
            write!(f, "{}", self.law)
        }
    }
}
