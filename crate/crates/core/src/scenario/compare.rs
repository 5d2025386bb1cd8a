use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::run::{fmt_float, plain_label, DEFAULT_SAMPLES, DEFAULT_SEED};
use super::{load_scenario, Method, Scenario, ScenarioError};
use crate::augmentation::moment_basis;
use crate::baselines::{linear_trajectory, monte_carlo, unscented_trajectory};
use crate::propagation::{extract_state_moments, propagate_recursive};

/// Absolute tolerance against printed table cells.
pub const DEFAULT_TABLE_TOL: f64 = 5e-4;
/// Monte Carlo cells may deviate by this many standard errors.
pub const MC_SIGMA_BOUND: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableId {
    /// Polar-to-Cartesian conversion of a noisy range and bearing.
    Table1,
    /// The cubic noise filter `0.9 η³ + η`.
    Table2,
}

impl FromStr for TableId {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table1" => Ok(TableId::Table1),
            "table2" => Ok(TableId::Table2),
            _ => Err(ScenarioError::InvalidOption(format!("unknown table `{s}`"))),
        }
    }
}

/// One printed cell of a comparison table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PublishedCell {
    pub case: &'static str,
    pub scenario: &'static str,
    pub statistic: &'static str,
    pub method: Method,
    pub value: f64,
    pub note: Option<&'static str>,
}

const TABLE1: &[(&str, &str, [(&str, [f64; 4]); 4])] = &[
    (
        "I",
        "table1",
        [
            ("E[x]", [0.0, 0.0, 0.0, 0.0]),
            ("E[y]", [1.0, 0.9802, 0.9802, 0.9802]),
            ("Var(x)", [0.04, 0.0384, 0.0385, 0.0385]),
            ("Var(y)", [0.0004, 0.0012, 0.0012, 0.0012]),
        ],
    ),
    (
        "II",
        "table1_case2",
        [
            ("E[x]", [0.0, 0.0, 0.0, 0.0]),
            ("E[y]", [1.0, 0.613, 0.606, 0.606]),
            ("Var(x)", [1.0, 0.324, 0.471, 0.471]),
            ("Var(y)", [0.009, 0.389, 0.250, 0.250]),
        ],
    ),
    (
        "III",
        "table1_case3",
        [
            ("E[x]", [0.0, 0.0, 0.0, 0.0]),
            ("E[y]", [1.967, 1.038, 0.894, 0.894]),
            ("Var(x)", [5.1627, 1.0672, 2.3068, 2.3068]),
            ("Var(y)", [0.0076, 1.7332, 0.772, 0.772]),
        ],
    ),
];

const TABLE2: &[(&str, &str, [(&str, [f64; 4]); 2])] = &[
    ("I", "table2", [("E[z]", [0.0, 0.0, 0.0, 0.0]), ("Var(z)", [0.10, 0.161, 0.166, 0.166])]),
    ("II", "table2_case2", [("E[z]", [0.0, 0.0, 0.0, 0.0]), ("Var(z)", [0.5, 2.761, 3.367, 3.368])]),
    ("III", "table2_case3", [("E[z]", [0.0, 0.0, 0.0, 0.0]), ("Var(z)", [0.0833, 0.125, 0.107, 0.107])]),
    ("IV", "table2_case4", [("E[z]", [0.612, 0.747, 0.747, 0.747]), ("Var(z)", [0.2806, 0.414, 0.345, 0.345])]),
];

const COLUMNS: [Method; 4] = [Method::Linear, Method::Unscented, Method::Exact, Method::MonteCarlo];

const TYPO_0166: &str = "printed as 0166, read as 0.166";

/// Every printed cell of a table, row by row.
pub fn published_table(id: TableId) -> Vec<PublishedCell> {
    let mut out = Vec::new();
    let mut push = |case, scenario, stat, vals: &[f64; 4]| {
        for (m, v) in COLUMNS.iter().zip(vals) {
            let note = (case == "I" && stat == "Var(z)" && *m == Method::MonteCarlo).then_some(TYPO_0166);
            out.push(PublishedCell { case, scenario, statistic: stat, method: *m, value: *v, note });
        }
    };
    match id {
        TableId::Table1 => {
            for (case, scn, rows) in TABLE1 {
                for (stat, vals) in rows {
                    push(*case, *scn, *stat, vals);
                }
            }
        }
        TableId::Table2 => {
            for (case, scn, rows) in TABLE2 {
                for (stat, vals) in rows {
                    push(*case, *scn, *stat, vals);
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareOptions {
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub kappa: Option<f64>,
    /// Scenario comparisons only; `None` uses the scenario's orders.
    pub orders: Option<Vec<u32>>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions { samples: DEFAULT_SAMPLES, seed: DEFAULT_SEED, tolerance: DEFAULT_TABLE_TOL, kappa: None, orders: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub case: String,
    pub statistic: String,
    pub method: Method,
    pub value: f64,
    pub standard_error: Option<f64>,
    /// Printed table cell, or the exact moment for scenario comparisons.
    pub reference: Option<f64>,
    pub flagged: bool,
    pub note: String,
}

impl CompareRow {
    pub fn deviation(&self) -> Option<f64> {
        self.reference.map(|r| self.value - r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub title: String,
    pub samples: usize,
    pub seed: u64,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn flagged(&self) -> impl Iterator<Item = &CompareRow> {
        self.rows.iter().filter(|r| r.flagged)
    }

    pub fn find(&self, case: &str, statistic: &str, method: Method) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.case == case && r.statistic == statistic && r.method == method)
    }

    /// `case,statistic,method,value,standard_error,reference,deviation,flag,note`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("case,statistic,method,value,standard_error,reference,deviation,flag,note\n");
        let opt = |x: Option<f64>| x.map(fmt_float).unwrap_or_default();
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.case,
                r.statistic,
                r.method,
                fmt_float(r.value),
                opt(r.standard_error),
                opt(r.reference),
                opt(r.deviation()),
                if r.flagged { "DEVIATES" } else { "ok" },
                r.note
            ));
        }
        s
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} (Monte Carlo: {} rollouts, seed {})", self.title, self.samples, self.seed)?;
        writeln!(f, "{:<6} {:<12} {:<11} {:>14} {:>11} {:>11}  flag", "case", "statistic", "method", "value", "std.err", "reference")?;
        for r in &self.rows {
            let se = r.standard_error.map(|e| format!("{e:.2e}")).unwrap_or_default();
            let rf = r.reference.map(|e| format!("{e}")).unwrap_or_default();
            write!(f, "{:<6} {:<12} {:<11} {:>14.6} {:>11} {:>11}  {}", r.case, r.statistic, r.method.name(), r.value, se, rf, if r.flagged { "DEVIATES" } else { "ok" })?;
            if !r.note.is_empty() {
                write!(f, "  ({})", r.note)?;
            }
            writeln!(f)?;
        }
        let n = self.flagged().count();
        writeln!(f, "{n} of {} cells deviate", self.rows.len())
    }
}

fn stat_of(stat: &str) -> (bool, &str) {
    // ("Var(x)" → variance of x), ("E[x]" → mean of x)
    if let Some(s) = stat.strip_prefix("Var(") {
        (true, s.trim_end_matches(')'))
    } else {
        (false, stat.trim_start_matches("E[").trim_end_matches(']'))
    }
}

/// Reproduces a printed comparison table with all four methods.
pub fn compare_table(id: TableId, opts: &CompareOptions) -> Result<CompareReport, ScenarioError> {
    let cells = published_table(id);
    let mut rows = Vec::with_capacity(cells.len());
    let mut scenarios: Vec<&str> = cells.iter().map(|c| c.scenario).collect();
    scenarios.dedup();
    for name in scenarios {
        let scn = load_scenario(name)?;
        let spec = &scn.spec;
        let exact = propagate_recursive(spec, &scn.targets, &[1, 2], 1)?;
        let lin = linear_trajectory(spec, 1)?;
        let ut = unscented_trajectory(spec, 1, opts.kappa)?;
        let mc = monte_carlo(spec, &scn.targets, &[1], 1, opts.samples, opts.seed)?;
        for cell in cells.iter().filter(|c| c.scenario == name) {
            let (is_var, var_name) = stat_of(cell.statistic);
            let sym = spec
                .table
                .lookup(var_name)
                .ok_or_else(|| ScenarioError::InvalidOption(format!("table statistic `{}` names no state", cell.statistic)))?;
            let t = scn.targets.iter().position(|s| *s == sym).expect("table statistics use targets");
            let si = spec.states.iter().position(|s| *s == sym).expect("targets are states");
            let (value, se) = match cell.method {
                Method::Linear | Method::Unscented => {
                    let b = if cell.method == Method::Linear { &lin[1] } else { &ut[1] };
                    (if is_var { b.variance(si) } else { b.mean[si] }, None)
                }
                Method::MonteCarlo => {
                    if is_var {
                        let (v, e) = mc.variance[1][t];
                        (v, Some(e))
                    } else {
                        let mut e = vec![0; scn.targets.len()];
                        e[t] = 1;
                        let (v, se) = mc.moment(&e, 1).expect("order 1 was sampled");
                        (v, Some(se))
                    }
                }
                _ => {
                    let m1 = extract_state_moments(&exact, &[(sym, 1)])?[1];
                    if is_var {
                        (extract_state_moments(&exact, &[(sym, 2)])?[1] - m1 * m1, None)
                    } else {
                        (m1, None)
                    }
                }
            };
            let bound = opts.tolerance + se.map_or(0.0, |e| MC_SIGMA_BOUND * e);
            rows.push(CompareRow {
                case: cell.case.to_string(),
                statistic: cell.statistic.to_string(),
                method: cell.method,
                value,
                standard_error: se,
                reference: Some(cell.value),
                flagged: (value - cell.value).abs() > bound,
                note: cell.note.unwrap_or("").to_string(),
            });
        }
    }
    let title = match id {
        TableId::Table1 => "table1: Cartesian mean and variance of noisy range and bearing",
        TableId::Table2 => "table2: mean and variance of the cubic noise filter",
    };
    Ok(CompareReport { title: title.into(), samples: opts.samples, seed: opts.seed, rows })
}

/// Monte Carlo against exact moments for every step and order; a cell is
/// flagged when it lies more than `MC_SIGMA_BOUND` standard errors away.
pub fn compare_scenario(scn: &Scenario, opts: &CompareOptions) -> Result<CompareReport, ScenarioError> {
    let orders = opts.orders.clone().unwrap_or_else(|| scn.orders.clone());
    let n = scn.horizon;
    let exact = propagate_recursive(&scn.spec, &scn.targets, &orders, n)?;
    let mc = monte_carlo(&scn.spec, &scn.targets, &orders, n, opts.samples, opts.seed)?;
    let names = scn.target_names();
    let mut rows = Vec::new();
    for &alpha in &orders {
        for exps in moment_basis(scn.targets.len(), alpha)? {
            let mono: Vec<_> = scn.targets.iter().zip(&exps).filter(|(_, e)| **e > 0).map(|(t, e)| (*t, *e)).collect();
            let series = extract_state_moments(&exact, &mono)?;
            let label = plain_label(&exps, &names);
            for (k, &want) in series.iter().enumerate() {
                let (v, se) = mc.moment(&exps, k).expect("sampled order");
                let dev = (v - want).abs();
                // deterministic cells carry no sampling error
                let flagged = if se > 0.0 { dev > MC_SIGMA_BOUND * se } else { dev > 1e-9 * want.abs().max(1.0) };
                rows.push(CompareRow {
                    case: format!("k={k}"),
                    statistic: format!("E[{label}]"),
                    method: Method::MonteCarlo,
                    value: v,
                    standard_error: Some(se),
                    reference: Some(want),
                    flagged,
                    note: if se > 0.0 { format!("z={:.2}", (v - want) / se) } else { String::new() },
                });
            }
        }
    }
    rows.sort_by_key(|r| r.case.trim_start_matches("k=").parse::<usize>().unwrap_or(0));
    Ok(CompareReport {
        title: format!("{}: Monte Carlo against exact moments", scn.name),
        samples: opts.samples,
        seed: opts.seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_have_every_cell() {
        assert_eq!(published_table(TableId::Table1).len(), 3 * 4 * 4);
        let t2 = published_table(TableId::Table2);
        assert_eq!(t2.len(), 4 * 2 * 4);
        let typo: Vec<_> = t2.iter().filter(|c| c.note.is_some()).collect();
        assert_eq!(typo.len(), 1);
        assert_eq!((typo[0].case, typo[0].method, typo[0].value), ("I", Method::MonteCarlo, 0.166));
    }

    #[test]
    fn small_scenario_comparison_is_consistent() {
        let scn = load_scenario("example5").unwrap();
        let opts = CompareOptions { samples: 20_000, seed: 11, orders: Some(vec![1, 2]), ..Default::default() };
        let r = compare_scenario(&scn, &opts).unwrap();
        assert_eq!(r.rows.len(), 7 * 2);
        assert!(r.to_csv().lines().count() == r.rows.len() + 1);
    }
}
