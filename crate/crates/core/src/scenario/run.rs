use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{Scenario, ScenarioError};
use crate::algebra::{Monomial, SymbolId};
use crate::augmentation::moment_basis;
use crate::baselines::{linear_trajectory, monte_carlo, unscented_trajectory, GaussianBelief};
use crate::propagation::{propagate_direct, propagate_recursive, MomentTrajectory};

/// Rollouts when neither the options nor the scenario name a count.
pub const DEFAULT_SAMPLES: usize = 100_000;
/// Seed used when none is given outside CI mode.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Recursion over the moment-state systems.
    Exact,
    /// Composition of the dynamics from `x(0)`.
    Direct,
    Linear,
    Unscented,
    #[serde(rename = "montecarlo")]
    MonteCarlo,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Exact, Method::Direct, Method::Linear, Method::Unscented, Method::MonteCarlo];

    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Direct => "direct",
            Method::Linear => "linear",
            Method::Unscented => "unscented",
            Method::MonteCarlo => "montecarlo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ScenarioError::InvalidOption(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagateOptions {
    pub method: Method,
    /// Overrides the scenario's orders.
    pub orders: Option<Vec<u32>>,
    /// Overrides the scenario's horizon; must not exceed it.
    pub horizon: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    /// Unscented spread; `None` is `3 − n`.
    pub kappa: Option<f64>,
}

impl PropagateOptions {
    pub fn new(method: Method) -> Self {
        PropagateOptions { method, orders: None, horizon: None, samples: None, seed: None, kappa: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    pub k: usize,
    pub order: u32,
    /// Exponents over the targets.
    pub exponents: Vec<u32>,
    pub monomial: String,
    pub value: f64,
    pub standard_error: Option<f64>,
}

/// Moments of the target states for every step and requested order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentTable {
    pub scenario: String,
    pub method: Method,
    pub targets: Vec<String>,
    pub horizon: usize,
    pub orders: Vec<u32>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub rows: Vec<MomentRow>,
}

/// `x^2*y`, or `1` for the empty monomial.
pub(crate) fn plain_label(exps: &[u32], names: &[String]) -> String {
    let parts: Vec<String> = exps
        .iter()
        .zip(names)
        .filter(|(e, _)| **e > 0)
        .map(|(e, n)| if *e == 1 { n.clone() } else { format!("{n}^{e}") })
        .collect();
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("*")
    }
}

/// Shortest round-trip text, switching to exponent form for very small or
/// very large magnitudes.
pub(crate) fn fmt_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".into()
    } else if !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

impl MomentTable {
    pub fn get(&self, exps: &[u32], k: usize) -> Option<&MomentRow> {
        self.rows.iter().find(|r| r.k == k && r.exponents == exps)
    }

    /// `k,order,monomial,value,standard_error`; the last field is empty for
    /// deterministic methods.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,order,monomial,value,standard_error\n");
        for r in &self.rows {
            let se = r.standard_error.map(fmt_float).unwrap_or_default();
            s.push_str(&format!("{},{},{},{},{}\n", r.k, r.order, r.monomial, fmt_float(r.value), se));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("moment table serializes")
    }
}

/// Raw moment `E[Π x_i^{e_i}]` of a Gaussian, by
/// `E[x^e] = μ_i E[x^{e−1_i}] + Σ_j C_ij (e−1_i)_j E[x^{e−1_i−1_j}]`.
pub(crate) fn gaussian_moment(mean: &DVector<f64>, cov: &DMatrix<f64>, exps: &[u32]) -> f64 {
    fn go(mean: &DVector<f64>, cov: &DMatrix<f64>, e: &mut Vec<u32>, memo: &mut HashMap<Vec<u32>, f64>) -> f64 {
        let Some(i) = e.iter().position(|&p| p > 0) else {
            return 1.0;
        };
        if let Some(v) = memo.get(e.as_slice()) {
            return *v;
        }
        let key = e.clone();
        e[i] -= 1;
        let mut v = mean[i] * go(mean, cov, e, memo);
        for j in 0..e.len() {
            if e[j] > 0 && cov[(i, j)] != 0.0 {
                let c = cov[(i, j)] * e[j] as f64;
                e[j] -= 1;
                v += c * go(mean, cov, e, memo);
                e[j] += 1;
            }
        }
        e[i] += 1;
        memo.insert(key, v);
        v
    }
    go(mean, cov, &mut exps.to_vec(), &mut HashMap::new())
}

fn target_positions(scn: &Scenario) -> Vec<usize> {
    scn.targets.iter().map(|t| scn.spec.states.iter().position(|s| s == t).expect("targets are states")).collect()
}

fn exact_rows(
    traj: &MomentTrajectory,
    targets: &[SymbolId],
    orders: &[u32],
    names: &[String],
) -> Result<Vec<MomentRow>, ScenarioError> {
    let pos: Vec<usize> = targets
        .iter()
        .map(|t| traj.functionals.iter().position(|m| *m == Monomial::symbol(*t)).expect("targets are functionals"))
        .collect();
    let mut series = Vec::new();
    for &alpha in orders {
        for exps in moment_basis(targets.len(), alpha)? {
            let mut f = vec![0u32; traj.functionals.len()];
            for (p, e) in pos.iter().zip(&exps) {
                f[*p] += e;
            }
            series.push((alpha, exps, traj.series(&f)?));
        }
    }
    let mut rows = Vec::new();
    for k in 0..=traj.horizon {
        for (alpha, exps, s) in &series {
            rows.push(MomentRow {
                k,
                order: *alpha,
                monomial: plain_label(exps, names),
                exponents: exps.clone(),
                value: s[k],
                standard_error: None,
            });
        }
    }
    Ok(rows)
}

fn gaussian_rows(
    beliefs: &[GaussianBelief],
    pos: &[usize],
    orders: &[u32],
    names: &[String],
) -> Result<Vec<MomentRow>, ScenarioError> {
    let mut rows = Vec::new();
    for (k, b) in beliefs.iter().enumerate() {
        let idx: Vec<usize> = pos.to_vec();
        let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| b.mean[i]));
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |r, c| b.cov[(idx[r], idx[c])]);
        for &alpha in orders {
            for exps in moment_basis(idx.len(), alpha)? {
                rows.push(MomentRow {
                    k,
                    order: alpha,
                    monomial: plain_label(&exps, names),
                    value: gaussian_moment(&mean, &cov, &exps),
                    exponents: exps,
                    standard_error: None,
                });
            }
        }
    }
    Ok(rows)
}

/// Moments of the scenario's targets for `k = 0..=N` by the chosen method.
///
/// Linear and unscented propagation report the moments of their Gaussian
/// belief.
pub fn run_propagate(scn: &Scenario, opts: &PropagateOptions) -> Result<MomentTable, ScenarioError> {
    let n = opts.horizon.unwrap_or(scn.horizon);
    if n > scn.horizon {
        return Err(ScenarioError::InvalidOption(format!("horizon {n} exceeds the scenario horizon {}", scn.horizon)));
    }
    let mut orders = opts.orders.clone().unwrap_or_else(|| scn.orders.clone());
    orders.sort_unstable();
    orders.dedup();
    if orders.is_empty() || orders[0] == 0 {
        return Err(ScenarioError::InvalidOption("orders must be positive".into()));
    }
    let names = scn.target_names();
    let spec = &scn.spec;
    let (mut samples, mut seed) = (None, None);
    let rows = match opts.method {
        Method::Exact => exact_rows(&propagate_recursive(spec, &scn.targets, &orders, n)?, &scn.targets, &orders, &names)?,
        Method::Direct => {
            let mut rows = Vec::new();
            for k in 0..=n {
                for d in propagate_direct(spec, &scn.targets, &orders, k)? {
                    for (exps, v) in d.exponents.into_iter().zip(d.values) {
                        rows.push(MomentRow {
                            k,
                            order: d.order,
                            monomial: plain_label(&exps, &names),
                            exponents: exps,
                            value: v,
                            standard_error: None,
                        });
                    }
                }
            }
            rows
        }
        Method::Linear => gaussian_rows(&linear_trajectory(spec, n)?, &target_positions(scn), &orders, &names)?,
        Method::Unscented => {
            gaussian_rows(&unscented_trajectory(spec, n, opts.kappa)?, &target_positions(scn), &orders, &names)?
        }
        Method::MonteCarlo => {
            let ns = opts.samples.or(scn.samples).unwrap_or(DEFAULT_SAMPLES);
            let s = opts.seed.or(scn.seed).unwrap_or(DEFAULT_SEED);
            let mc = monte_carlo(spec, &scn.targets, &orders, n, ns, s)?;
            samples = Some(ns);
            seed = Some(s);
            let mut rows = Vec::new();
            for k in 0..=n {
                for o in mc.orders.values() {
                    for (i, exps) in o.exponents.iter().enumerate() {
                        rows.push(MomentRow {
                            k,
                            order: o.order,
                            monomial: plain_label(exps, &names),
                            exponents: exps.clone(),
                            value: o.mean[k][i],
                            standard_error: Some(o.std_error[k][i]),
                        });
                    }
                }
            }
            rows
        }
    };
    Ok(MomentTable {
        scenario: scn.name.clone(),
        method: opts.method,
        targets: names,
        horizon: n,
        orders,
        samples,
        seed,
        rows,
    })
}
