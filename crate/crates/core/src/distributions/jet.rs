//! Truncated Taylor series ("jets") with complex coefficients.
//!
//! A jet of order `d` at a base point `t0` stores the normalized Taylor
//! coefficients `f^(j)(t0) / j!` for `j = 0..=d`. Arithmetic on jets is exact
//! up to the truncation order, which is what lets characteristic-function
//! derivatives be read off without finite differences.

use num_complex::Complex64;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Jet {
    coeffs: Vec<Complex64>,
}

impl Jet {
    pub(crate) fn from_coeffs(coeffs: Vec<Complex64>) -> Self {
        debug_assert!(!coeffs.is_empty());
        Jet { coeffs }
    }

    /// Jet of the exponential of a polynomial given by its Taylor coefficients.
    pub(crate) fn exp_of(poly: &[Complex64], order: usize) -> Self {
        let mut a = vec![Complex64::new(0.0, 0.0); order + 1];
        for (dst, src) in a.iter_mut().zip(poly) {
            *dst = *src;
        }
        let mut e = vec![Complex64::new(0.0, 0.0); order + 1];
        e[0] = a[0].exp();
        for n in 1..=order {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 1..=n {
                acc += a[k] * e[n - k] * k as f64;
            }
            e[n] = acc / n as f64;
        }
        Jet { coeffs: e }
    }

    pub(crate) fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub(crate) fn value(&self) -> Complex64 {
        self.coeffs[0]
    }

    pub(crate) fn mul(&self, other: &Jet) -> Jet {
        let order = self.order().min(other.order());
        let mut out = vec![Complex64::new(0.0, 0.0); order + 1];
        for (i, a) in self.coeffs.iter().take(order + 1).enumerate() {
            for (j, b) in other.coeffs.iter().take(order + 1 - i).enumerate() {
                out[i + j] += a * b;
            }
        }
        Jet { coeffs: out }
    }

    /// Given the jet of `f` at `s * t0`, returns the jet of `t -> f(s * t)` at `t0`.
    pub(crate) fn rescale_argument(mut self, s: f64) -> Jet {
        let mut p = 1.0;
        for c in self.coeffs.iter_mut() {
            *c *= p;
            p *= s;
        }
        self
    }

    /// Derivatives `f^(j)(t0)` rather than normalized coefficients.
    pub(crate) fn derivatives(&self) -> Vec<Complex64> {
        let mut fact = 1.0;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| {
                if j > 0 {
                    fact *= j as f64;
                }
                c * fact
            })
            .collect()
    }
}
