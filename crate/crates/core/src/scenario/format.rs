//! Scenario text format.
//!
//! ```text
//! # comment
//! [constants]
//! dt = 0.1
//! [states]
//! x, y, theta
//! [dynamics]
//! x = x + dt*(v + w_v)*cos(theta)
//! [disturbances]
//! w_v = uniform(-0.1, 0.1)
//! [initial]
//! theta = affine(2, 0.5, beta(1, 3))
//! [controls]
//! v = 2
//! u = 2*pi/7.5*(k - 5)
//! s = [0, 0.5, 1]
//! [run]
//! name = underwater
//! horizon = 11
//! targets = x, y
//! orders = 1..6
//! ```

use std::fmt;

use crate::algebra::{parse_expr, Expr, ParseError};

/// Distribution literal with unevaluated numeric arguments.
#[derive(Clone, Debug, PartialEq)]
pub enum DistLit {
    /// `normal(mean, variance)`
    Normal(Expr, Expr),
    Uniform(Expr, Expr),
    Beta(Expr, Expr),
    /// `gamma(shape, scale)`
    Gamma(Expr, Expr),
    Point(Expr),
    /// `affine(scale, shift, law)`
    Affine(Expr, Expr, Box<DistLit>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleLit {
    /// Constant, or a formula in the step index `k`.
    Expr(Expr),
    List(Vec<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSection {
    pub name: String,
    pub description: Option<String>,
    pub horizon: usize,
    /// Empty means every state.
    pub targets: Vec<String>,
    /// Empty means `1..6`.
    pub orders: Vec<u32>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    /// Empty means CSV only.
    pub outputs: Vec<OutputFormat>,
}

/// Parsed but unvalidated scenario file.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioFile {
    pub constants: Vec<(String, Expr)>,
    pub states: Vec<String>,
    pub dynamics: Vec<(String, Expr)>,
    pub disturbances: Vec<(String, DistLit)>,
    pub initial: Vec<(String, DistLit)>,
    pub controls: Vec<(String, ScheduleLit)>,
    pub run: RunSection,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Constants,
    States,
    Dynamics,
    Disturbances,
    Initial,
    Controls,
    Run,
}

impl Section {
    fn parse(name: &str) -> Option<Section> {
        Some(match name {
            "constants" => Section::Constants,
            "states" => Section::States,
            "dynamics" => Section::Dynamics,
            "disturbances" => Section::Disturbances,
            "initial" => Section::Initial,
            "controls" => Section::Controls,
            "run" => Section::Run,
            _ => return None,
        })
    }
}

/// A piece of one source line with its 1-based starting column.
#[derive(Clone, Copy)]
struct Span<'a> {
    text: &'a str,
    line: usize,
    col: usize,
}

impl<'a> Span<'a> {
    fn trim(self) -> Span<'a> {
        let lead = self.text.len() - self.text.trim_start().len();
        Span { text: self.text.trim(), line: self.line, col: self.col + lead }
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.col, msg)
    }

    fn split_at(self, i: usize) -> (Span<'a>, Span<'a>) {
        let (a, b) = self.text.split_at(i);
        (Span { text: a, ..self }, Span { text: b, col: self.col + i, ..self })
    }

    fn expr(self) -> Result<Expr, ParseError> {
        let s = self.trim();
        if s.text.is_empty() {
            return Err(s.err("expected an expression"));
        }
        parse_expr(s.text).map_err(|e| e.relocate(s.line, s.col - 1))
    }

    /// Splits on commas outside parentheses and brackets.
    fn split_commas(self) -> Vec<Span<'a>> {
        let mut out = Vec::new();
        let mut depth = 0i32;
        let mut start = 0;
        for (i, c) in self.text.char_indices() {
            match c {
                '(' | '[' => depth += 1,
                ')' | ']' => depth -= 1,
                ',' if depth == 0 => {
                    out.push(Span { text: &self.text[start..i], line: self.line, col: self.col + start });
                    start = i + 1;
                }
                _ => {}
            }
        }
        out.push(Span { text: &self.text[start..], line: self.line, col: self.col + start });
        out
    }

    fn name(self) -> Result<String, ParseError> {
        let s = self.trim();
        let mut chars = s.text.chars();
        let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !ok {
            return Err(s.err(format!("`{}` is not a valid name", s.text)));
        }
        Ok(s.text.to_string())
    }

    fn names(self) -> Result<Vec<String>, ParseError> {
        self.split_commas().into_iter().map(Span::name).collect()
    }

    fn integer<T: std::str::FromStr>(self) -> Result<T, ParseError> {
        let s = self.trim();
        s.text.parse().map_err(|_| s.err(format!("expected a non-negative integer, found `{}`", s.text)))
    }
}

fn dist_lit(s: Span<'_>) -> Result<DistLit, ParseError> {
    let s = s.trim();
    let Some(open) = s.text.find('(') else {
        return Err(s.err("expected a distribution such as `normal(0, 1)`"));
    };
    if !s.text.ends_with(')') {
        return Err(s.err("distribution literal must end with `)`"));
    }
    let (head, rest) = s.split_at(open);
    let (inner, _) = rest.split_at(rest.text.len() - 1);
    let inner = Span { text: &inner.text[1..], col: inner.col + 1, ..inner };
    let args = inner.split_commas();
    let family = head.trim().text;
    let want = match family {
        "point" => 1,
        "affine" => 3,
        "normal" | "uniform" | "beta" | "gamma" => 2,
        _ => return Err(head.trim().err(format!("unknown distribution `{family}`"))),
    };
    if args.len() != want || (want == 1 && args[0].text.trim().is_empty()) {
        return Err(s.err(format!("`{family}` takes {want} argument(s), found {}", args.len())));
    }
    Ok(match family {
        "point" => DistLit::Point(args[0].expr()?),
        "normal" => DistLit::Normal(args[0].expr()?, args[1].expr()?),
        "uniform" => DistLit::Uniform(args[0].expr()?, args[1].expr()?),
        "beta" => DistLit::Beta(args[0].expr()?, args[1].expr()?),
        "gamma" => DistLit::Gamma(args[0].expr()?, args[1].expr()?),
        _ => DistLit::Affine(args[0].expr()?, args[1].expr()?, Box::new(dist_lit(args[2])?)),
    })
}

fn schedule_lit(s: Span<'_>) -> Result<ScheduleLit, ParseError> {
    let s = s.trim();
    if let Some(body) = s.text.strip_prefix('[') {
        let Some(body) = body.strip_suffix(']') else {
            return Err(s.err("control list must end with `]`"));
        };
        let inner = Span { text: body, line: s.line, col: s.col + 1 };
        if inner.text.trim().is_empty() {
            return Ok(ScheduleLit::List(Vec::new()));
        }
        return Ok(ScheduleLit::List(inner.split_commas().into_iter().map(Span::expr).collect::<Result<_, _>>()?));
    }
    Ok(ScheduleLit::Expr(s.expr()?))
}

fn orders(s: Span<'_>) -> Result<Vec<u32>, ParseError> {
    let t = s.trim();
    if let Some(i) = t.text.find("..") {
        let (a, b) = t.split_at(i);
        let b = Span { text: &b.text[2..], col: b.col + 2, ..b };
        let (lo, hi): (u32, u32) = (a.integer()?, b.integer()?);
        if lo == 0 || hi < lo {
            return Err(t.err(format!("order range `{}` must satisfy 1 <= a <= b", t.text)));
        }
        return Ok((lo..=hi).collect());
    }
    let v: Vec<u32> = t.split_commas().into_iter().map(Span::integer).collect::<Result<_, _>>()?;
    if v.contains(&0) {
        return Err(t.err("orders start at 1"));
    }
    Ok(v)
}

fn outputs(s: Span<'_>) -> Result<Vec<OutputFormat>, ParseError> {
    s.split_commas()
        .into_iter()
        .map(|p| {
            let p = p.trim();
            match p.text {
                "csv" => Ok(OutputFormat::Csv),
                "json" => Ok(OutputFormat::Json),
                other => Err(p.err(format!("unknown output format `{other}`"))),
            }
        })
        .collect()
}

/// Parses scenario text. Symbol resolution happens later, in validation.
pub fn parse_scenario(src: &str) -> Result<ScenarioFile, ParseError> {
    let mut file = ScenarioFile {
        constants: Vec::new(),
        states: Vec::new(),
        dynamics: Vec::new(),
        disturbances: Vec::new(),
        initial: Vec::new(),
        controls: Vec::new(),
        run: RunSection {
            name: String::new(),
            description: None,
            horizon: 0,
            targets: Vec::new(),
            orders: Vec::new(),
            samples: None,
            seed: None,
            outputs: Vec::new(),
        },
    };
    let mut section: Option<Section> = None;
    let mut seen_horizon = false;
    for (i, raw) in src.lines().enumerate() {
        let text = raw.split('#').next().unwrap_or("");
        let line = Span { text, line: i + 1, col: 1 }.trim();
        if line.text.is_empty() {
            continue;
        }
        if let Some(name) = line.text.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(line.err("section header must end with `]`"));
            };
            section = Some(Section::parse(name.trim()).ok_or_else(|| line.err(format!("unknown section `{name}`")))?);
            continue;
        }
        let Some(sec) = section else {
            return Err(line.err("entry outside of any section"));
        };
        if sec == Section::States {
            file.states.extend(line.names()?);
            continue;
        }
        let Some(eq) = line.text.find('=') else {
            return Err(line.err("expected `name = value`"));
        };
        let (key, value) = line.split_at(eq);
        let value = Span { text: &value.text[1..], col: value.col + 1, ..value };
        let name = key.name()?;
        match sec {
            Section::Constants => file.constants.push((name, value.expr()?)),
            Section::Dynamics => file.dynamics.push((name, value.expr()?)),
            Section::Disturbances => file.disturbances.push((name, dist_lit(value)?)),
            Section::Initial => file.initial.push((name, dist_lit(value)?)),
            Section::Controls => file.controls.push((name, schedule_lit(value)?)),
            Section::Run => {
                let run = &mut file.run;
                match name.as_str() {
                    "name" => run.name = value.name()?,
                    "description" => run.description = Some(value.trim().text.to_string()),
                    "horizon" => {
                        run.horizon = value.integer()?;
                        seen_horizon = true;
                    }
                    "targets" => run.targets = value.names()?,
                    "orders" => run.orders = orders(value)?,
                    "samples" => run.samples = Some(value.integer()?),
                    "seed" => run.seed = Some(value.integer()?),
                    "outputs" => run.outputs = outputs(value)?,
                    other => return Err(key.trim().err(format!("unknown run option `{other}`"))),
                }
            }
            Section::States => unreachable!(),
        }
    }
    if file.run.name.is_empty() {
        return Err(ParseError::new(src.lines().count().max(1), 1, "missing `name` in [run]"));
    }
    if !seen_horizon {
        return Err(ParseError::new(src.lines().count().max(1), 1, "missing `horizon` in [run]"));
    }
    Ok(file)
}

impl fmt::Display for DistLit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistLit::Normal(a, b) => write!(f, "normal({a}, {b})"),
            DistLit::Uniform(a, b) => write!(f, "uniform({a}, {b})"),
            DistLit::Beta(a, b) => write!(f, "beta({a}, {b})"),
            DistLit::Gamma(a, b) => write!(f, "gamma({a}, {b})"),
            DistLit::Point(a) => write!(f, "point({a})"),
            DistLit::Affine(a, b, d) => write!(f, "affine({a}, {b}, {d})"),
        }
    }
}

impl fmt::Display for ScheduleLit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleLit::Expr(e) => write!(f, "{e}"),
            ScheduleLit::List(v) => {
                let parts: Vec<String> = v.iter().map(|e| e.to_string()).collect();
                write!(f, "[{}]", parts.join(", "))
            }
        }
    }
}

fn write_orders(f: &mut fmt::Formatter<'_>, orders: &[u32]) -> fmt::Result {
    let contiguous = orders.len() > 1 && orders.windows(2).all(|w| w[1] == w[0] + 1);
    if contiguous {
        writeln!(f, "orders = {}..{}", orders[0], orders[orders.len() - 1])
    } else {
        let parts: Vec<String> = orders.iter().map(|o| o.to_string()).collect();
        writeln!(f, "orders = {}", parts.join(", "))
    }
}

/// Canonical text; parsing it yields an equal `ScenarioFile`.
impl fmt::Display for ScenarioFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.constants.is_empty() {
            writeln!(f, "[constants]")?;
            for (n, e) in &self.constants {
                writeln!(f, "{n} = {e}")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "[states]")?;
        writeln!(f, "{}", self.states.join(", "))?;
        writeln!(f, "\n[dynamics]")?;
        for (n, e) in &self.dynamics {
            writeln!(f, "{n} = {e}")?;
        }
        if !self.disturbances.is_empty() {
            writeln!(f, "\n[disturbances]")?;
            for (n, d) in &self.disturbances {
                writeln!(f, "{n} = {d}")?;
            }
        }
        writeln!(f, "\n[initial]")?;
        for (n, d) in &self.initial {
            writeln!(f, "{n} = {d}")?;
        }
        if !self.controls.is_empty() {
            writeln!(f, "\n[controls]")?;
            for (n, s) in &self.controls {
                writeln!(f, "{n} = {s}")?;
            }
        }
        let r = &self.run;
        writeln!(f, "\n[run]")?;
        writeln!(f, "name = {}", r.name)?;
        if let Some(d) = &r.description {
            writeln!(f, "description = {d}")?;
        }
        writeln!(f, "horizon = {}", r.horizon)?;
        if !r.targets.is_empty() {
            writeln!(f, "targets = {}", r.targets.join(", "))?;
        }
        if !r.orders.is_empty() {
            write_orders(f, &r.orders)?;
        }
        if let Some(n) = r.samples {
            writeln!(f, "samples = {n}")?;
        }
        if let Some(s) = r.seed {
            writeln!(f, "seed = {s}")?;
        }
        if !r.outputs.is_empty() {
            let parts: Vec<&str> = r.outputs.iter().map(|o| o.extension()).collect();
            writeln!(f, "outputs = {}", parts.join(", "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# two-state toy
[constants]
dt = 0.1   # step
[states]
x, theta
[dynamics]
x = x + dt*v*cos(theta)
theta = theta + w
[disturbances]
w = affine(2, -1, beta(1, 3))
[initial]
x = uniform(-0.1, 0.1)
theta = normal(pi/4, 0.5)
[controls]
v = [1, 2, 3]
[run]
name = toy
horizon = 3
targets = x
orders = 1..3
outputs = csv, json
";

    #[test]
    fn parses_every_section() {
        let f = parse_scenario(SAMPLE).unwrap();
        assert_eq!(f.states, ["x", "theta"]);
        assert_eq!(f.dynamics.len(), 2);
        assert!(matches!(&f.disturbances[0].1, DistLit::Affine(_, _, d) if matches!(**d, DistLit::Beta(..))));
        assert_eq!(f.controls[0].1.to_string(), "[1, 2, 3]");
        assert_eq!(f.run.orders, [1, 2, 3]);
        assert_eq!(f.run.outputs, [OutputFormat::Csv, OutputFormat::Json]);
    }

    #[test]
    fn display_round_trips() {
        let f = parse_scenario(SAMPLE).unwrap();
        let again = parse_scenario(&f.to_string()).unwrap();
        assert_eq!(f, again);
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_scenario("[states]\nx\n[dynamics]\nx = x +* 2\n").unwrap_err();
        assert_eq!(e.line, 4);
        assert!(e.col >= 5, "{e}");
        let e = parse_scenario("[initial]\nx = cauchy(0, 1)\n").unwrap_err();
        assert_eq!((e.line, e.col), (2, 5));
        let e = parse_scenario("x = 1\n").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse_scenario("[states]\nx\n[run]\nname = a\n").unwrap_err();
        assert!(e.msg.contains("horizon"));
        let e = parse_scenario("[run]\nname = a\nhorizon = 2\norders = 3..1\n").unwrap_err();
        assert_eq!(e.line, 4);
    }
}
