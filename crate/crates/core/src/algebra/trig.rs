//! Rewriting trigonometric atoms in terms of a common base argument.
//!
//! `cos^b(n y + φ) sin^c(n y + φ)` becomes a polynomial in `cos y`, `sin y`
//! through angle addition and de Moivre's formula.

use std::collections::BTreeMap;

use crate::moments::binomial;

/// Polynomial in `(cos y, sin y)`: `(cos power, sin power) -> coefficient`.
pub(crate) type TrigPoly = BTreeMap<(u32, u32), f64>;

pub(crate) const MAX_SCALE_RATIO: f64 = 8.0;

/// Integer `n` with `scale = n * base`, if it exists and `n <= 8`.
pub(crate) fn integer_ratio(scale: f64, base: f64) -> Option<u32> {
    let r = scale / base;
    let n = r.round();
    if (1.0..=MAX_SCALE_RATIO).contains(&n) && (r - n).abs() <= 1e-9 * n {
        Some(n as u32)
    } else {
        None
    }
}

fn mul(a: &TrigPoly, b: &TrigPoly) -> TrigPoly {
    let mut out = TrigPoly::new();
    for (&(c1, s1), &x) in a {
        for (&(c2, s2), &y) in b {
            *out.entry((c1 + c2, s1 + s2)).or_insert(0.0) += x * y;
        }
    }
    out.retain(|_, v| *v != 0.0);
    out
}

fn pow(a: &TrigPoly, n: u32) -> TrigPoly {
    let mut out = TrigPoly::from([((0, 0), 1.0)]);
    for _ in 0..n {
        out = mul(&out, a);
    }
    out
}

fn add_scaled(out: &mut TrigPoly, a: &TrigPoly, s: f64) {
    if s == 0.0 {
        return;
    }
    for (&k, &v) in a {
        *out.entry(k).or_insert(0.0) += s * v;
    }
}

/// `(cos(n y), sin(n y))` from `(cos y + i sin y)^n`.
fn multiple_angle(n: u32) -> (TrigPoly, TrigPoly) {
    let mut c = TrigPoly::new();
    let mut s = TrigPoly::new();
    for k in 0..=n {
        let b = binomial(n, k) as f64;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            c.insert((n - k, k), sign * b);
        } else {
            s.insert((n - k, k), sign * b);
        }
    }
    (c, s)
}

/// Snap values that are zero up to rounding (cos(π/2) and friends).
pub(crate) fn snap(x: f64) -> f64 {
    if x.abs() < 1e-15 {
        0.0
    } else {
        x
    }
}

/// `cos^b(n y + φ) sin^c(n y + φ)` as a polynomial in `cos y`, `sin y`.
pub(crate) fn rebase(n: u32, phase: f64, b: u32, c: u32) -> TrigPoly {
    let (cn, sn) = multiple_angle(n);
    let (cp, sp) = (snap(phase.cos()), snap(phase.sin()));
    let mut cos_arg = TrigPoly::new();
    add_scaled(&mut cos_arg, &cn, cp);
    add_scaled(&mut cos_arg, &sn, -sp);
    let mut sin_arg = TrigPoly::new();
    add_scaled(&mut sin_arg, &cn, sp);
    add_scaled(&mut sin_arg, &sn, cp);
    let mut out = mul(&pow(&cos_arg, b), &pow(&sin_arg, c));
    out.retain(|_, v| *v != 0.0);
    out
}

pub(crate) fn product(a: &TrigPoly, b: &TrigPoly) -> TrigPoly {
    mul(a, b)
}
