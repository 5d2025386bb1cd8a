//! Polynomial, trigonometric and mixed moments of one random variable.
//!
//! `E[X^a1 cos^a2(sX+φ) sin^a3(sX+φ)]` is expanded with Euler's identity
//! into a finite sum of `i^{-a1} Φ^(a1)(m s) e^{i m φ}` terms, so every query
//! reduces to characteristic-function jets at integer multiples of `s`.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::algebra::{AlgebraError, Bindings, MtpExpr, SymbolTable};
use crate::distributions::{Distribution, DistributionError, RESIDUE_TOL};

/// `E[X^poly cos^cos(scale X + phase) sin^sin(scale X + phase)]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MtpMomentQuery {
    pub poly: u32,
    pub cos: u32,
    pub sin: u32,
    pub scale: f64,
    pub phase: f64,
}

impl MtpMomentQuery {
    pub fn new(poly: u32, cos: u32, sin: u32) -> Self {
        MtpMomentQuery { poly, cos, sin, scale: 1.0, phase: 0.0 }
    }

    pub fn with_argument(mut self, scale: f64, phase: f64) -> Self {
        self.scale = scale;
        self.phase = phase;
        self
    }

    pub fn order(&self) -> u32 {
        self.poly + self.cos + self.sin
    }
}

/// Exact binomial coefficient. Exact for every `n <= 62`.
pub fn binomial(n: u32, k: u32) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc * (n as u128 - i) / (i + 1);
    }
    acc as u64
}

fn i_pow(n: i64) -> Complex64 {
    match n.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Characteristic-function derivatives of one law on the lattice `t = m * scale`.
///
/// Built once per (law, argument) pair and then queried for many
/// `(a1, a2, a3)` combinations.
#[derive(Clone, Debug)]
pub struct TrigMomentTable {
    scale: f64,
    phase: f64,
    max_poly: usize,
    max_freq: usize,
    // jets[m] holds Φ^(j)(m * scale) for m = 0..=max_freq
    jets: Vec<Vec<Complex64>>,
}

impl TrigMomentTable {
    pub fn new(
        dist: &Distribution,
        scale: f64,
        phase: f64,
        max_poly: usize,
        max_freq: usize,
    ) -> Result<Self, DistributionError> {
        Self::with_cap(dist, scale, phase, max_poly, max_freq, crate::distributions::DEFAULT_MAX_ORDER)
    }

    pub fn with_cap(
        dist: &Distribution,
        scale: f64,
        phase: f64,
        max_poly: usize,
        max_freq: usize,
        cap: usize,
    ) -> Result<Self, DistributionError> {
        let jets = (0..=max_freq)
            .map(|m| Ok(dist.cf_jet_capped(m as f64 * scale, max_poly, cap)?.derivatives))
            .collect::<Result<Vec<_>, DistributionError>>()?;
        Ok(TrigMomentTable { scale, phase, max_poly, max_freq, jets })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `Φ^(j)(m s)`, using `Φ^(j)(-t) = (-1)^j conj(Φ^(j)(t))` for negative `m`.
    fn derivative(&self, j: usize, m: i64) -> Complex64 {
        let d = self.jets[m.unsigned_abs() as usize][j];
        if m >= 0 {
            d
        } else if j.is_multiple_of(2) {
            d.conj()
        } else {
            -d.conj()
        }
    }

    pub fn covers(&self, poly: u32, cos: u32, sin: u32) -> bool {
        poly as usize <= self.max_poly && (cos + sin) as usize <= self.max_freq
    }

    pub fn get(&self, poly: u32, cos: u32, sin: u32) -> Result<f64, DistributionError> {
        debug_assert!(self.covers(poly, cos, sin));
        let (a1, a2, a3) = (poly as usize, cos, sin);
        let n = (a2 + a3) as i64;
        let mut sum = Complex64::new(0.0, 0.0);
        for k1 in 0..=a2 {
            let c1 = binomial(a2, k1) as f64;
            for k2 in 0..=a3 {
                let sign = if (a3 - k2) % 2 == 0 { 1.0 } else { -1.0 };
                let c = c1 * binomial(a3, k2) as f64 * sign;
                let m = 2 * (k1 + k2) as i64 - n;
                let rot = if self.phase == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    let a = m as f64 * self.phase;
                    Complex64::new(a.cos(), a.sin())
                };
                let term = self.derivative(a1, m) * rot * c;
                sum += term;
            }
        }
        // 1 / (2^{a2+a3} i^{a3} i^{a1})
        let value = sum * i_pow(-(a1 as i64) - a3 as i64) / 2f64.powi(n as i32);
        let tol = RESIDUE_TOL * value.re.abs().max(1.0);
        if value.im.abs() > tol {
            return Err(DistributionError::ResidueTooLarge { residue: value.im.abs() });
        }
        Ok(value.re)
    }
}

/// `E[X^a1 cos^a2(sX+φ) sin^a3(sX+φ)]` for `X` drawn from `dist`.
pub fn mtp_moment(dist: &Distribution, q: MtpMomentQuery) -> Result<f64, DistributionError> {
    if q.order() == 0 {
        return Ok(1.0);
    }
    if q.cos + q.sin == 0 {
        return dist.raw_moment(q.poly as usize);
    }
    let table = TrigMomentTable::new(dist, q.scale, q.phase, q.poly as usize, (q.cos + q.sin) as usize)?;
    table.get(q.poly, q.cos, q.sin)
}

/// `E[x^a1 y^a2]` for `x = (r* + ω_r) cos(θ* + ω_θ)`, `y = (r* + ω_r) sin(θ* + ω_θ)`
/// with independent `ω_r`, `ω_θ`.
pub fn polar_to_cartesian_moment(
    r_dist: &Distribution,
    theta_dist: &Distribution,
    r_star: f64,
    theta_star: f64,
    a1: u32,
    a2: u32,
) -> Result<f64, DistributionError> {
    let n = a1 + a2;
    let mut radial = 0.0;
    for k in 0..=n {
        radial += binomial(n, k) as f64 * r_star.powi((n - k) as i32) * r_dist.raw_moment(k as usize)?;
    }
    let angular = mtp_moment(theta_dist, MtpMomentQuery::new(0, a1, a2).with_argument(1.0, theta_star))?;
    Ok(radial * angular)
}

/// `E[f^α]` for an expression over independent bound symbols.
pub fn pushforward_moment(
    f: &MtpExpr,
    table: &SymbolTable,
    bindings: &Bindings,
    alpha: u32,
) -> Result<f64, AlgebraError> {
    let power = f.pow(alpha)?;
    let e = power.expectation(table, bindings, |_| false)?;
    Ok(e.constant_term())
}

/// Memo of `mtp_moment` values keyed by the query bit pattern. Readers share
/// the map; inserts happen through `&mut self`.
#[derive(Debug, Default)]
pub struct MomentMemo {
    values: HashMap<(u32, u32, u32, u64, u64), f64>,
}

impl MomentMemo {
    pub fn get_or_compute(&mut self, dist: &Distribution, q: MtpMomentQuery) -> Result<f64, DistributionError> {
        let key = (q.poly, q.cos, q.sin, q.scale.to_bits(), q.phase.to_bits());
        if let Some(v) = self.values.get(&key) {
            return Ok(*v);
        }
        let v = mtp_moment(dist, q)?;
        self.values.insert(key, v);
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn u05() -> Distribution {
        Distribution::uniform(0.0, 0.5).unwrap()
    }

    #[test]
    fn binomials_are_exact() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(32, 16), 601_080_390);
        assert_eq!(binomial(62, 31), 465_428_353_255_261_088);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn uniform_trigonometric_moments() {
        let d = u05();
        let cases = [
            ((0, 1, 0), 0.9589),
            ((0, 0, 1), 0.2448),
            ((0, 1, 1), 0.2298),
            ((0, 3, 0), 0.8854),
            ((0, 2, 1), 0.2161),
            ((0, 1, 2), 0.0735),
            ((0, 0, 3), 0.0287),
        ];
        for ((a, b, c), want) in cases {
            let got = mtp_moment(&d, MtpMomentQuery::new(a, b, c)).unwrap();
            assert!((got - want).abs() < 5e-4, "({a},{b},{c}): {got} vs {want}");
        }
    }

    #[test]
    fn pure_trig_matches_direct_formula() {
        // cos^a sin^b of a uniform angle by brute-force midpoint integration
        let d = Distribution::uniform(-1.0, 2.0).unwrap();
        for a in 0..4u32 {
            for b in 0..4u32 {
                let got = mtp_moment(&d, MtpMomentQuery::new(0, a, b)).unwrap();
                let n = 400_000;
                let mut acc = 0.0;
                for i in 0..n {
                    let x = -1.0 + 3.0 * (i as f64 + 0.5) / n as f64;
                    acc += x.cos().powi(a as i32) * x.sin().powi(b as i32);
                }
                acc /= n as f64;
                assert!((got - acc).abs() < 1e-9, "({a},{b})");
            }
        }
    }

    #[test]
    fn normal_cosine_moment() {
        let d = Distribution::normal(0.3, 0.7).unwrap();
        let got = mtp_moment(&d, MtpMomentQuery::new(0, 1, 0)).unwrap();
        assert!((got - 0.3f64.cos() * (-0.35f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn order_zero_is_one() {
        let d = Distribution::gamma(0.5, 3.0).unwrap();
        assert_eq!(mtp_moment(&d, MtpMomentQuery::new(0, 0, 0).with_argument(2.0, 1.0)).unwrap(), 1.0);
    }

    #[test]
    fn phase_shift_matches_angle_identity() {
        let d = Distribution::beta(2.0, 5.0).unwrap();
        let phi = PI / 4.0;
        let shifted = mtp_moment(&d, MtpMomentQuery::new(1, 1, 0).with_argument(0.5, phi)).unwrap();
        let c = mtp_moment(&d, MtpMomentQuery::new(1, 1, 0).with_argument(0.5, 0.0)).unwrap();
        let s = mtp_moment(&d, MtpMomentQuery::new(1, 0, 1).with_argument(0.5, 0.0)).unwrap();
        assert!((shifted - (phi.cos() * c - phi.sin() * s)).abs() < 1e-13);
    }

    #[test]
    fn polar_degenerate_point() {
        let r = Distribution::point(0.0).unwrap();
        let t = Distribution::point(0.0).unwrap();
        let ex = polar_to_cartesian_moment(&r, &t, 1.0, PI / 2.0, 1, 0).unwrap();
        let ey = polar_to_cartesian_moment(&r, &t, 1.0, PI / 2.0, 0, 1).unwrap();
        assert!(ex.abs() < 1e-15);
        assert!((ey - 1.0).abs() < 1e-15);
    }
}
