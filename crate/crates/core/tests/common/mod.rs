//! Test-only oracles and reporting helpers shared by the integration targets.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use momentprop::distributions::{Distribution, Law};
use momentprop::moments::MtpMomentQuery;
use momentprop::scenario::{load_scenario, run_propagate, Method, MomentTable, PropagateOptions};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

/// Tanh-sinh quadrature of `f(x, x - a, b - x)` over `[a, b]`.
///
/// The integrand receives both endpoint distances computed without
/// cancellation, so endpoint singularities like `(1 - x)^{-0.9}` are
/// integrated to full precision.
pub fn tanh_sinh(a: f64, b: f64, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let h = 1.0 / 128.0;
    let t_max = 6.5;
    let mut sum = 0.0;
    let steps = (t_max / h) as i64;
    for i in -steps..=steps {
        let t = i as f64 * h;
        let u = FRAC_PI_2 * t.sinh();
        let e = (-2.0 * u.abs()).exp();
        // sech²(u) and 1 ∓ tanh(u) written in terms of e^{-2|u|}.
        let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
        let small = 2.0 * e / (1.0 + e);
        let (from_a, to_b) = if u >= 0.0 { (half * (2.0 - small), half * small) } else { (half * small, half * (2.0 - small)) };
        if from_a <= 0.0 || to_b <= 0.0 {
            continue;
        }
        let x = if u >= 0.0 { b - to_b } else { a + from_a };
        let w = half * FRAC_PI_2 * t.cosh() * sech2;
        let v = f(x, from_a, to_b);
        if v.is_finite() {
            sum += w * v;
        }
    }
    sum * h
}

/// `∫ density(x) g(x) dx` for the base law, with `g` applied to `scale x + shift`.
pub fn integrate_law(d: &Distribution, g: impl Fn(f64) -> f64) -> f64 {
    let y = |x: f64| d.scale * x + d.shift;
    match d.law {
        Law::Normal { mean, variance } => {
            let sd = variance.sqrt();
            let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
            tanh_sinh(mean - 14.0 * sd, mean + 14.0 * sd, |x, _, _| {
                let z = (x - mean) / sd;
                norm * (-0.5 * z * z).exp() * g(y(x))
            })
        }
        Law::Uniform { lower, upper } => tanh_sinh(lower, upper, |x, _, _| g(y(x)) / (upper - lower)),
        Law::Beta { a, b } => {
            let lb = ln_beta(a, b);
            tanh_sinh(0.0, 1.0, |x, lo, hi| ((a - 1.0) * lo.ln() + (b - 1.0) * hi.ln() - lb).exp() * g(y(x)))
        }
        Law::Gamma { shape, scale } => {
            let upper = shape * scale + 60.0 * shape.sqrt() * scale + 60.0 * scale;
            let ln_norm = ln_gamma(shape) + shape * scale.ln();
            tanh_sinh(0.0, upper, |x, lo, _| ((shape - 1.0) * lo.ln() - x / scale - ln_norm).exp() * g(y(x)))
        }
    }
}

/// Quadrature value of `E[Y^p cos^c(sY+φ) sin^s(sY+φ)]`.
pub fn oracle_moment(d: &Distribution, q: MtpMomentQuery) -> f64 {
    integrate_law(d, |y| {
        let arg = q.scale * y + q.phase;
        y.powi(q.poly as i32) * arg.cos().powi(q.cos as i32) * arg.sin().powi(q.sin as i32)
    })
}

/// One representative of every supported law, plus affine and skewed shapes.
pub fn oracle_laws() -> Vec<(&'static str, Distribution)> {
    vec![
        ("normal(0, 1)", Distribution::normal(0.0, 1.0).unwrap()),
        ("normal(pi/4, 0.5)", Distribution::normal(std::f64::consts::FRAC_PI_4, 0.5).unwrap()),
        ("uniform(-2, 2)", Distribution::uniform(-2.0, 2.0).unwrap()),
        ("uniform(0, 0.5)", Distribution::uniform(0.0, 0.5).unwrap()),
        ("beta(3, 0.1)", Distribution::beta(3.0, 0.1).unwrap()),
        ("beta(0.75, 0.75)", Distribution::beta(0.75, 0.75).unwrap()),
        ("gamma(1, 2)", Distribution::gamma(1.0, 2.0).unwrap()),
        ("gamma(2.5, 0.4)", Distribution::gamma(2.5, 0.4).unwrap()),
        ("affine(2, -1, beta(2, 5))", Distribution::beta(2.0, 5.0).unwrap().affine(2.0, -1.0).unwrap()),
    ]
}

/// Every query with total order at most `alpha_max`.
pub fn queries(alpha_max: u32) -> Vec<(u32, u32, u32)> {
    let mut out = Vec::new();
    for total in 1..=alpha_max {
        for p in 0..=total {
            for c in 0..=total - p {
                out.push((p, c, total - p - c));
            }
        }
    }
    out
}

pub fn propagate(name: &str, method: Method, orders: &[u32]) -> MomentTable {
    let scn = load_scenario(name).unwrap();
    let mut opts = PropagateOptions::new(method);
    opts.orders = Some(orders.to_vec());
    if method == Method::MonteCarlo {
        opts.samples = Some(1_000_000);
        opts.seed = Some(1);
    }
    run_propagate(&scn, &opts).unwrap()
}

/// `(value, standard error)` of a monomial over the scenario targets at step `k`.
pub fn moment(t: &MomentTable, exps: &[u32], k: usize) -> (f64, f64) {
    let row = t.get(exps, k).unwrap_or_else(|| panic!("no moment {exps:?} at k={k}"));
    (row.value, row.standard_error.unwrap_or(0.0))
}

/// Collects PASS/FAIL lines for one criterion and fails the test at the end
/// if any line failed.
pub struct Checks {
    criterion: String,
    failures: usize,
    lines: usize,
}

impl Checks {
    pub fn new(criterion: &str) -> Self {
        Checks { criterion: criterion.to_string(), failures: 0, lines: 0 }
    }

    pub fn check(&mut self, label: &str, ok: bool, detail: String) -> bool {
        self.lines += 1;
        if !ok {
            self.failures += 1;
        }
        println!("{} [{}] {label}: {detail}", if ok { "PASS" } else { "FAIL" }, self.criterion);
        ok
    }

    pub fn abs(&mut self, label: &str, value: f64, reference: f64, tol: f64) -> bool {
        let d = (value - reference).abs();
        self.check(label, d <= tol, format!("{value:.6} vs {reference} (|d|={d:.2e}, tol {tol:e})"))
    }

    pub fn rel(&mut self, label: &str, value: f64, reference: f64, tol: f64) -> bool {
        let r = (value - reference).abs() / reference.abs();
        self.check(label, r <= tol, format!("{value:.6} vs {reference} (rel={r:.2e}, tol {tol:e})"))
    }

    /// `|value - reference| <= sigmas * se`.
    pub fn within_se(&mut self, label: &str, value: f64, se: f64, reference: f64, sigmas: f64) -> bool {
        let d = (value - reference).abs();
        let ok = d <= sigmas * se || (se == 0.0 && d <= 1e-9 * reference.abs().max(1.0));
        self.check(label, ok, format!("{value:.6} vs {reference:.6} (z={:.2}, se={se:.2e})", d / se))
    }

    pub fn runtime(&mut self, label: &str, elapsed: std::time::Duration, limit_secs: f64) -> bool {
        let s = elapsed.as_secs_f64();
        self.check(label, s < limit_secs, format!("{:.1} ms (limit {limit_secs} s)", s * 1e3))
    }

    pub fn finish(self) {
        println!("{} [{}] {} of {} checks passed", if self.failures == 0 { "PASS" } else { "FAIL" }, self.criterion, self.lines - self.failures, self.lines);
        assert_eq!(self.failures, 0, "criterion {} has {} failing checks", self.criterion, self.failures);
    }
}
