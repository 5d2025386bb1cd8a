//! Declarative scenarios: the text format, validation into a [`SystemSpec`],
//! the built-in experiments, and the runners behind the command-line tool.

mod compare;
mod format;
mod run;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::algebra::{eval_numeric, lower, AlgebraError, Expr, ParseError, SymbolId, SymbolKind, SymbolTable};
use crate::augmentation::{AugmentationError, Schedule, SystemSpec};
use crate::baselines::BaselineError;
use crate::distributions::{Distribution, DistributionError};
use crate::propagation::PropagationError;

pub use compare::{
    compare_scenario, compare_table, published_table, CompareOptions, CompareReport, CompareRow, PublishedCell, TableId,
    DEFAULT_TABLE_TOL, MC_SIGMA_BOUND,
};
pub use format::{parse_scenario, DistLit, OutputFormat, RunSection, ScenarioFile, ScheduleLit};
pub use run::{run_propagate, Method, MomentRow, MomentTable, PropagateOptions};

/// Orders used when a scenario does not list any.
pub const DEFAULT_ORDERS: [u32; 6] = [1, 2, 3, 4, 5, 6];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("invalid scenario, symbol `{symbol}`: {msg}")]
    Validation { symbol: String, msg: String },
    #[error("unknown scenario `{0}` (not a built-in name or a readable file)")]
    UnknownScenario(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error(transparent)]
    Augmentation(#[from] AugmentationError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Coarse error classes, each with its own process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    /// Malformed or inconsistent scenario.
    Parse,
    /// No finite augmented system exists.
    Closure,
    /// A term, basis or derivative-order cap was hit.
    Budget,
    Numeric,
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Parse => 3,
            ErrorClass::Closure => 4,
            ErrorClass::Budget => 5,
            ErrorClass::Numeric => 6,
            ErrorClass::Io => 7,
        }
    }
}

fn distribution_class(e: &DistributionError) -> ErrorClass {
    match e {
        DistributionError::OrderTooHigh { .. } => ErrorClass::Budget,
        DistributionError::InvalidParameter(_) => ErrorClass::Parse,
        _ => ErrorClass::Numeric,
    }
}

fn algebra_class(e: &AlgebraError) -> ErrorClass {
    match e {
        AlgebraError::TermBudgetExceeded { .. } => ErrorClass::Budget,
        AlgebraError::IncompatibleAtoms { .. } => ErrorClass::Closure,
        AlgebraError::Distribution(d) => distribution_class(d),
        _ => ErrorClass::Parse,
    }
}

fn augmentation_class(e: &AugmentationError) -> ErrorClass {
    match e {
        AugmentationError::ClosureDiverged { .. } => ErrorClass::Closure,
        AugmentationError::BasisTooLarge { .. } => ErrorClass::Budget,
        AugmentationError::InvalidSpec(_) => ErrorClass::Parse,
        AugmentationError::Algebra(a) => algebra_class(a),
        AugmentationError::Distribution(d) => distribution_class(d),
    }
}

impl ScenarioError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ScenarioError::Parse(_) | ScenarioError::Validation { .. } | ScenarioError::UnknownScenario(_) => {
                ErrorClass::Parse
            }
            ScenarioError::Io { .. } => ErrorClass::Io,
            ScenarioError::InvalidOption(_) => ErrorClass::Usage,
            ScenarioError::Augmentation(a) => augmentation_class(a),
            ScenarioError::Propagation(p) => match p {
                PropagationError::Augmentation(a) => augmentation_class(a),
                PropagationError::Algebra(a) => algebra_class(a),
                _ => ErrorClass::Usage,
            },
            ScenarioError::Baseline(b) => match b {
                BaselineError::CholeskyFailure { .. } => ErrorClass::Numeric,
                BaselineError::InvalidInput(_) => ErrorClass::Usage,
                BaselineError::Augmentation(a) => augmentation_class(a),
            },
        }
    }
}

fn invalid(symbol: &str, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { symbol: symbol.to_string(), msg: msg.into() }
}

/// A validated scenario ready to run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub description: Option<String>,
    pub source: ScenarioFile,
    pub spec: SystemSpec,
    pub targets: Vec<SymbolId>,
    pub orders: Vec<u32>,
    pub horizon: usize,
    pub outputs: Vec<OutputFormat>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn target_names(&self) -> Vec<String> {
        self.targets.iter().map(|t| self.spec.table.name(*t).to_string()).collect()
    }
}

const BUILTINS: &[(&str, &str)] = &[
    ("example1", include_str!("../../scenarios/example1.scn")),
    ("example2", include_str!("../../scenarios/example2.scn")),
    ("example5", include_str!("../../scenarios/example5.scn")),
    ("table1", include_str!("../../scenarios/table1.scn")),
    ("table1_case2", include_str!("../../scenarios/table1_case2.scn")),
    ("table1_case3", include_str!("../../scenarios/table1_case3.scn")),
    ("table2", include_str!("../../scenarios/table2.scn")),
    ("table2_case2", include_str!("../../scenarios/table2_case2.scn")),
    ("table2_case3", include_str!("../../scenarios/table2_case3.scn")),
    ("table2_case4", include_str!("../../scenarios/table2_case4.scn")),
    ("underwater", include_str!("../../scenarios/underwater.scn")),
    ("ground", include_str!("../../scenarios/ground.scn")),
    ("rimless", include_str!("../../scenarios/rimless.scn")),
    ("planar_aerial", include_str!("../../scenarios/planar_aerial.scn")),
    ("aerial3d", include_str!("../../scenarios/aerial3d.scn")),
    ("diffdrive", include_str!("../../scenarios/diffdrive.scn")),
    ("arm", include_str!("../../scenarios/arm.scn")),
];

/// `example3` and `example4` are the polar-to-Cartesian and cubic-noise
/// examples, stored as Case I of `table1` and `table2`.
const ALIASES: &[(&str, &str)] = &[("example3", "table1"), ("example4", "table2")];

/// Built-in names, aliases included, in listing order.
pub fn builtin_names() -> Vec<&'static str> {
    let mut v: Vec<&str> = BUILTINS.iter().map(|(n, _)| *n).collect();
    v.extend(ALIASES.iter().map(|(a, _)| *a));
    v.sort_by_key(|n| (!n.starts_with("example"), *n));
    v
}

pub fn builtin_source(name: &str) -> Option<&'static str> {
    let name = ALIASES.iter().find(|(a, _)| *a == name).map_or(name, |(_, t)| *t);
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// A built-in name, or else a path to a scenario file.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario, ScenarioError> {
    if let Some(src) = builtin_source(name_or_path) {
        return scenario_from_str(src);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(ScenarioError::UnknownScenario(name_or_path.to_string()));
    }
    let src = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    scenario_from_str(&src)
}

pub fn scenario_from_str(src: &str) -> Result<Scenario, ScenarioError> {
    validate(parse_scenario(src)?)
}

const RESERVED: [&str; 2] = ["pi", "k"];

/// Replaces named constants by their values.
fn fold_constants(e: &Expr, consts: &HashMap<String, f64>) -> Expr {
    match e {
        Expr::Var(v) => consts.get(v).map_or_else(|| e.clone(), |c| Expr::Num(*c)),
        Expr::Num(_) => e.clone(),
        Expr::Neg(a) => Expr::Neg(Box::new(fold_constants(a, consts))),
        Expr::Bin(op, a, b) => Expr::bin(*op, fold_constants(a, consts), fold_constants(b, consts)),
        Expr::Pow(a, n) => Expr::Pow(Box::new(fold_constants(a, consts)), *n),
        Expr::Call(func, a) => Expr::Call(*func, Box::new(fold_constants(a, consts))),
    }
}

fn number(e: &Expr, consts: &HashMap<String, f64>, owner: &str) -> Result<f64, ScenarioError> {
    let v = eval_numeric(e, &|n: &str| consts.get(n).copied())
        .map_err(|err| invalid(owner, format!("`{e}` is not a numeric constant ({err})")))?;
    if !v.is_finite() {
        return Err(invalid(owner, format!("`{e}` evaluates to {v}")));
    }
    Ok(v)
}

fn distribution(lit: &DistLit, consts: &HashMap<String, f64>, owner: &str) -> Result<Distribution, ScenarioError> {
    let n = |e: &Expr| number(e, consts, owner);
    let wrap = |r: Result<Distribution, DistributionError>| r.map_err(|e| invalid(owner, e.to_string()));
    match lit {
        DistLit::Normal(m, v) => wrap(Distribution::normal(n(m)?, n(v)?)),
        DistLit::Uniform(a, b) => wrap(Distribution::uniform(n(a)?, n(b)?)),
        DistLit::Beta(a, b) => wrap(Distribution::beta(n(a)?, n(b)?)),
        DistLit::Gamma(k, s) => wrap(Distribution::gamma(n(k)?, n(s)?)),
        DistLit::Point(x) => wrap(Distribution::point(n(x)?)),
        DistLit::Affine(s, c, d) => wrap(distribution(d, consts, owner)?.affine(n(s)?, n(c)?)),
    }
}

fn algebra_error(owner: &str, e: AlgebraError) -> ScenarioError {
    match e {
        AlgebraError::UnknownSymbol(s) => invalid(&s, format!("undeclared, used in the update of `{owner}`")),
        other => invalid(owner, other.to_string()),
    }
}

/// Resolves symbols, evaluates constants and laws, and checks the system.
pub fn validate(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    let mut consts: HashMap<String, f64> = HashMap::new();
    for (name, e) in &file.constants {
        if RESERVED.contains(&name.as_str()) {
            return Err(invalid(name, "reserved name"));
        }
        let v = number(e, &consts, name)?;
        if consts.insert(name.clone(), v).is_some() {
            return Err(invalid(name, "constant defined twice"));
        }
    }

    let mut table = SymbolTable::new();
    let mut declare = |name: &str, kind: SymbolKind, consts: &HashMap<String, f64>| {
        if RESERVED.contains(&name) {
            return Err(invalid(name, "reserved name"));
        }
        if consts.contains_key(name) {
            return Err(invalid(name, "already defined as a constant"));
        }
        table.declare(name, kind).map_err(|e| invalid(name, e.to_string()))
    };
    let states: Vec<SymbolId> =
        file.states.iter().map(|s| declare(s, SymbolKind::State, &consts)).collect::<Result<_, _>>()?;
    for (w, _) in &file.disturbances {
        declare(w, SymbolKind::Disturbance, &consts)?;
    }
    for (u, _) in &file.controls {
        declare(u, SymbolKind::Control, &consts)?;
    }
    if states.is_empty() {
        return Err(invalid("[states]", "no states declared"));
    }

    let state_id = |name: &str, what: &str| -> Result<SymbolId, ScenarioError> {
        match table.lookup(name) {
            Some(id) if table.kind(id) == SymbolKind::State => Ok(id),
            _ => Err(invalid(name, format!("{what} given for something that is not a declared state"))),
        }
    };

    let mut dynamics = BTreeMap::new();
    for (name, e) in &file.dynamics {
        let id = state_id(name, "update")?;
        let f = lower(e, &table, &consts).map_err(|err| algebra_error(name, err))?;
        if dynamics.insert(id, f).is_some() {
            return Err(invalid(name, "update given twice"));
        }
    }
    let mut disturbances = BTreeMap::new();
    for (name, lit) in &file.disturbances {
        let id = table.lookup(name).expect("declared above");
        disturbances.insert(id, distribution(lit, &consts, name)?);
    }
    let mut initial = BTreeMap::new();
    for (name, lit) in &file.initial {
        let id = state_id(name, "initial law")?;
        if initial.insert(id, distribution(lit, &consts, name)?).is_some() {
            return Err(invalid(name, "initial law given twice"));
        }
    }
    let mut controls = BTreeMap::new();
    for (name, lit) in &file.controls {
        let id = table.lookup(name).expect("declared above");
        let sch = match lit {
            ScheduleLit::List(v) => Schedule::List(v.iter().map(|e| number(e, &consts, name)).collect::<Result<_, _>>()?),
            ScheduleLit::Expr(e) => {
                let folded = fold_constants(e, &consts);
                let vars = folded.variables();
                if let Some(bad) = vars.iter().find(|v| *v != "k") {
                    return Err(invalid(name, format!("control formula may only use `k` and constants, found `{bad}`")));
                }
                if vars.is_empty() {
                    Schedule::Constant(number(&folded, &consts, name)?)
                } else {
                    Schedule::Formula(folded)
                }
            }
        };
        controls.insert(id, sch);
    }

    for &s in &states {
        let name = table.name(s);
        if !dynamics.contains_key(&s) {
            return Err(invalid(name, "state has no update"));
        }
        if !initial.contains_key(&s) {
            return Err(invalid(name, "state has no initial law"));
        }
    }

    let run = &file.run;
    let targets: Vec<SymbolId> = if run.targets.is_empty() {
        states.clone()
    } else {
        run.targets.iter().map(|t| state_id(t, "target")).collect::<Result<_, _>>()?
    };
    let orders = if run.orders.is_empty() { DEFAULT_ORDERS.to_vec() } else { run.orders.clone() };
    let outputs = if run.outputs.is_empty() { vec![OutputFormat::Csv] } else { run.outputs.clone() };

    let spec = SystemSpec { table, states, dynamics, disturbances, controls, initial, horizon: run.horizon };
    spec.validate().map_err(|e| invalid(&run.name, e.to_string()))?;
    for (&c, sch) in &spec.controls {
        for k in 0..spec.horizon {
            let v = sch.value_at(k).map_err(|e| invalid(spec.table.name(c), e.to_string()))?;
            if !v.is_finite() {
                return Err(invalid(spec.table.name(c), format!("control is {v} at k={k}")));
            }
        }
    }

    Ok(Scenario {
        name: run.name.clone(),
        description: run.description.clone(),
        targets,
        orders,
        horizon: run.horizon,
        outputs,
        samples: run.samples,
        seed: run.seed,
        spec,
        source: file,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_loads() {
        for name in builtin_names() {
            let s = load_scenario(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!s.targets.is_empty(), "{name}");
        }
    }

    #[test]
    fn builtins_round_trip_through_text() {
        for name in builtin_names() {
            let f = parse_scenario(builtin_source(name).unwrap()).unwrap();
            let again = parse_scenario(&f.to_string()).unwrap_or_else(|e| panic!("{name}: {e}\n{f}"));
            assert_eq!(f, again, "{name}");
        }
    }

    #[test]
    fn underwater_and_diffdrive_settings() {
        let s = load_scenario("underwater").unwrap();
        assert_eq!(s.horizon, 11);
        let ids: Vec<_> = ["v", "u"].iter().map(|n| s.spec.table.lookup(n).unwrap()).collect();
        for k in 0..11 {
            let c = s.spec.control_values(k).unwrap();
            assert_eq!((c[&ids[0]], c[&ids[1]]), (2.0, 0.0));
        }
        let d = load_scenario("diffdrive").unwrap();
        assert_eq!(d.horizon, 26);
        let vl = d.spec.table.lookup("v_l").unwrap();
        let vr = d.spec.table.lookup("v_r").unwrap();
        let c = d.spec.control_values(25).unwrap();
        assert_eq!((c[&vl], c[&vr]), (1.0, 3.0));
    }

    #[test]
    fn ground_control_is_affine_in_k() {
        let s = load_scenario("ground").unwrap();
        let u = s.spec.table.lookup("u").unwrap();
        for k in 0..11 {
            let want = 2.0 * std::f64::consts::PI / 7.5 * (k as f64 - 5.0);
            assert!((s.spec.control_values(k).unwrap()[&u] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn validation_names_the_symbol() {
        let src = "[states]\nx\n[dynamics]\nx = x + q\n[initial]\nx = point(0)\n[run]\nname = t\nhorizon = 1\n";
        match scenario_from_str(src) {
            Err(ScenarioError::Validation { symbol, .. }) => assert_eq!(symbol, "q"),
            other => panic!("{other:?}"),
        }
        let src = "[states]\nx\n[dynamics]\nx = x\n[run]\nname = t\nhorizon = 1\n";
        assert!(matches!(scenario_from_str(src), Err(ScenarioError::Validation { symbol, .. }) if symbol == "x"));
        let src = "[states]\nx\n[dynamics]\nx = x\n[initial]\nx = uniform(1, 0)\n[run]\nname = t\nhorizon = 1\n";
        assert!(matches!(scenario_from_str(src), Err(ScenarioError::Validation { symbol, .. }) if symbol == "x"));
        let src = "[states]\nx\n[dynamics]\nx = x*u\n[initial]\nx = point(1)\n[controls]\nu = [1]\n[run]\nname = t\nhorizon = 2\n";
        assert!(matches!(scenario_from_str(src), Err(ScenarioError::Validation { .. })));
    }

    #[test]
    fn malformed_file_is_a_parse_error() {
        assert!(matches!(scenario_from_str("[states\nx\n"), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn error_classes_have_distinct_codes() {
        let diverged = ScenarioError::Propagation(PropagationError::Augmentation(AugmentationError::ClosureDiverged {
            iterations: 50,
            functionals: 64,
        }));
        assert_eq!(diverged.class(), ErrorClass::Closure);
        let budget = ScenarioError::Augmentation(AugmentationError::Algebra(AlgebraError::TermBudgetExceeded { budget: 1 }));
        assert_eq!(budget.class(), ErrorClass::Budget);
        let chol = ScenarioError::Baseline(BaselineError::CholeskyFailure { col: 0, pivot: -1.0 });
        assert_eq!(chol.class(), ErrorClass::Numeric);
        let mut codes: Vec<i32> = [
            ErrorClass::Usage,
            ErrorClass::Parse,
            ErrorClass::Closure,
            ErrorClass::Budget,
            ErrorClass::Numeric,
            ErrorClass::Io,
        ]
        .iter()
        .map(|c| c.exit_code())
        .collect();
        codes.dedup();
        assert_eq!(codes.len(), 6);
    }

    #[test]
    fn missing_file_is_unknown() {
        assert!(matches!(load_scenario("no/such/file.scn"), Err(ScenarioError::UnknownScenario(_))));
    }
}
