use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::TAU;
use std::fmt;
use std::hash::{Hash, Hasher};

use super::trig::{self, integer_ratio, snap, TrigPoly};
use super::{AlgebraError, SymbolId, SymbolTable};

pub const DEFAULT_TERM_BUDGET: usize = 200_000;

/// `cos^cos(scale * s + phase) * sin^sin(scale * s + phase)` for one symbol `s`.
///
/// Canonical atoms have `scale > 0` and `phase` in `[0, 2π)`.
#[derive(Clone, Copy, Debug)]
pub struct TrigAtom {
    pub scale: f64,
    pub phase: f64,
    pub cos: u32,
    pub sin: u32,
}

impl TrigAtom {
    pub fn same_argument(&self, other: &TrigAtom) -> bool {
        self.scale.to_bits() == other.scale.to_bits() && self.phase.to_bits() == other.phase.to_bits()
    }

    pub fn degree(&self) -> u32 {
        self.cos + self.sin
    }

    pub fn eval(&self, x: f64) -> f64 {
        let a = self.scale * x + self.phase;
        let (s, c) = a.sin_cos();
        c.powi(self.cos as i32) * s.powi(self.sin as i32)
    }
}

impl PartialEq for TrigAtom {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for TrigAtom {}

impl PartialOrd for TrigAtom {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TrigAtom {
    fn cmp(&self, other: &Self) -> Ordering {
        self.scale
            .total_cmp(&other.scale)
            .then(self.phase.total_cmp(&other.phase))
            // cos before sin at equal degree
            .then(other.cos.cmp(&self.cos))
            .then(self.sin.cmp(&other.sin))
    }
}

impl Hash for TrigAtom {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.scale.to_bits().hash(state);
        self.phase.to_bits().hash(state);
        self.cos.hash(state);
        self.sin.hash(state);
    }
}

/// The part of a term that depends on one symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Factor {
    pub sym: SymbolId,
    pub poly: u32,
    pub trig: Option<TrigAtom>,
}

impl Factor {
    pub fn degree(&self) -> u32 {
        self.poly + self.trig.map_or(0, |t| t.degree())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let p = if self.poly == 0 { 1.0 } else { x.powi(self.poly as i32) };
        p * self.trig.map_or(1.0, |t| t.eval(x))
    }
}

/// Product of factors sorted by symbol, at most one factor per symbol.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial(Vec<Factor>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn from_factors(mut factors: Vec<Factor>) -> Self {
        factors.sort_by_key(|f| f.sym);
        debug_assert!(factors.windows(2).all(|w| w[0].sym != w[1].sym));
        Monomial(factors)
    }

    pub fn symbol(sym: SymbolId) -> Self {
        Monomial(vec![Factor { sym, poly: 1, trig: None }])
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.0
    }

    pub fn factor(&self, sym: SymbolId) -> Option<&Factor> {
        self.0.iter().find(|f| f.sym == sym)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(Factor::degree).sum()
    }

    pub fn has_trig(&self) -> bool {
        self.0.iter().any(|f| f.trig.is_some())
    }

    /// Splits into the factors accepted by `pred` and the rest.
    pub fn split(&self, pred: impl Fn(SymbolId) -> bool) -> (Monomial, Monomial) {
        let (a, b): (Vec<Factor>, Vec<Factor>) = self.0.iter().partition(|f| pred(f.sym));
        (Monomial(a), Monomial(b))
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.0.iter().map(|f| f.eval(values[f.sym.0 as usize])).product()
    }

    pub fn display<'a>(&'a self, table: &'a SymbolTable) -> impl fmt::Display + 'a {
        DisplayMonomial { m: self, table }
    }
}

/// Canonical form of `cos^b(s x + φ) sin^c(s x + φ)` as weighted optional atoms.
fn canonical_atom(scale: f64, phase: f64, cos: u32, sin: u32) -> Vec<(f64, Option<TrigAtom>)> {
    if cos + sin == 0 {
        return vec![(1.0, None)];
    }
    if scale == 0.0 {
        let v = snap(phase.cos()).powi(cos as i32) * snap(phase.sin()).powi(sin as i32);
        return vec![(v, None)];
    }
    let (mut scale, mut phase, mut sign) = (scale, phase, 1.0);
    if scale < 0.0 {
        // cos(-a) = cos(a), sin(-a) = -sin(a)
        scale = -scale;
        phase = -phase;
        if sin % 2 == 1 {
            sign = -1.0;
        }
    }
    let mut phase = phase.rem_euclid(TAU);
    if phase.abs() < 1e-15 || (TAU - phase).abs() < 1e-15 {
        phase = 0.0;
    }
    vec![(sign, Some(TrigAtom { scale, phase, cos, sin }))]
}

fn atom_as_poly(atom: &TrigAtom, base: f64) -> Option<TrigPoly> {
    let n = integer_ratio(atom.scale, base)?;
    Some(trig::rebase(n, atom.phase, atom.cos, atom.sin))
}

fn poly_to_atoms(p: TrigPoly, base: f64) -> Vec<(f64, Option<TrigAtom>)> {
    p.into_iter()
        .map(|((c, s), v)| {
            let atom = if c + s == 0 { None } else { Some(TrigAtom { scale: base, phase: 0.0, cos: c, sin: s }) };
            (v, atom)
        })
        .collect()
}

/// Product of two atoms on the same symbol.
fn merge_atoms(sym: SymbolId, a: &TrigAtom, b: &TrigAtom) -> Result<Vec<(f64, Option<TrigAtom>)>, AlgebraError> {
    if a.same_argument(b) {
        return Ok(vec![(1.0, Some(TrigAtom { cos: a.cos + b.cos, sin: a.sin + b.sin, ..*a }))]);
    }
    let base = a.scale.min(b.scale);
    let incompatible = || AlgebraError::IncompatibleAtoms { sym, a: a.scale, b: b.scale };
    let pa = atom_as_poly(a, base).ok_or_else(incompatible)?;
    let pb = atom_as_poly(b, base).ok_or_else(incompatible)?;
    Ok(poly_to_atoms(trig::product(&pa, &pb), base))
}

fn mul_monomials(a: &Monomial, b: &Monomial) -> Result<Vec<(f64, Monomial)>, AlgebraError> {
    let (fa, fb) = (&a.0, &b.0);
    let mut fixed: Vec<Factor> = Vec::with_capacity(fa.len() + fb.len());
    // symbols whose atoms had to be rewritten, with their alternatives
    let mut branches: Vec<(SymbolId, u32, Vec<(f64, Option<TrigAtom>)>)> = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < fa.len() || j < fb.len() {
        let take_a = j >= fb.len() || (i < fa.len() && fa[i].sym < fb[j].sym);
        let take_b = i >= fa.len() || (j < fb.len() && fb[j].sym < fa[i].sym);
        if take_a {
            fixed.push(fa[i]);
            i += 1;
        } else if take_b {
            fixed.push(fb[j]);
            j += 1;
        } else {
            let (x, y) = (fa[i], fb[j]);
            let poly = x.poly + y.poly;
            match (x.trig, y.trig) {
                (None, t) | (t, None) => fixed.push(Factor { sym: x.sym, poly, trig: t }),
                (Some(tx), Some(ty)) if tx.same_argument(&ty) => fixed.push(Factor {
                    sym: x.sym,
                    poly,
                    trig: Some(TrigAtom { cos: tx.cos + ty.cos, sin: tx.sin + ty.sin, ..tx }),
                }),
                (Some(tx), Some(ty)) => branches.push((x.sym, poly, merge_atoms(x.sym, &tx, &ty)?)),
            }
            i += 1;
            j += 1;
        }
    }
    if branches.is_empty() {
        return Ok(vec![(1.0, Monomial(fixed))]);
    }
    let mut out = vec![(1.0, fixed)];
    for (sym, poly, alts) in branches {
        let mut next = Vec::with_capacity(out.len() * alts.len());
        for (c, factors) in &out {
            for (w, atom) in &alts {
                let mut f = factors.clone();
                if poly > 0 || atom.is_some() {
                    f.push(Factor { sym, poly, trig: *atom });
                }
                next.push((c * w, f));
            }
        }
        out = next;
    }
    Ok(out.into_iter().map(|(c, f)| (c, Monomial::from_factors(f))).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrigFn {
    Cos,
    Sin,
}

/// Canonical sum of mixed trigonometric polynomial terms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MtpExpr {
    terms: BTreeMap<Monomial, f64>,
}

fn accumulate(map: &mut BTreeMap<Monomial, f64>, m: Monomial, c: f64) {
    if c == 0.0 {
        return;
    }
    match map.entry(m) {
        std::collections::btree_map::Entry::Vacant(e) => {
            e.insert(c);
        }
        std::collections::btree_map::Entry::Occupied(mut e) => {
            let v = *e.get() + c;
            if v == 0.0 {
                e.remove();
            } else {
                *e.get_mut() = v;
            }
        }
    }
}

impl MtpExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::from_monomial(Monomial::one(), c)
    }

    pub fn symbol(sym: SymbolId) -> Self {
        Self::from_monomial(Monomial::symbol(sym), 1.0)
    }

    pub fn from_monomial(m: Monomial, c: f64) -> Self {
        let mut terms = BTreeMap::new();
        accumulate(&mut terms, m, c);
        MtpExpr { terms }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut map = BTreeMap::new();
        for (m, c) in terms {
            accumulate(&mut map, m, c);
        }
        MtpExpr { terms: map }
    }

    /// `cos^cos(scale * sym + phase) sin^sin(scale * sym + phase)`.
    pub fn atom(sym: SymbolId, scale: f64, phase: f64, cos: u32, sin: u32) -> Self {
        Self::from_terms(canonical_atom(scale, phase, cos, sin).into_iter().map(|(c, atom)| {
            let m = match atom {
                None => Monomial::one(),
                Some(t) => Monomial(vec![Factor { sym, poly: 0, trig: Some(t) }]),
            };
            (m, c)
        }))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.is_zero()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(Monomial::is_one)
    }

    pub fn constant_term(&self) -> f64 {
        self.terms.get(&Monomial::one()).copied().unwrap_or(0.0)
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn symbols(&self) -> BTreeSet<SymbolId> {
        self.terms.keys().flat_map(|m| m.0.iter().map(|f| f.sym)).collect()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn add(&self, other: &MtpExpr) -> MtpExpr {
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            accumulate(&mut terms, m.clone(), *c);
        }
        MtpExpr { terms }
    }

    pub fn add_assign(&mut self, other: &MtpExpr) {
        for (m, c) in &other.terms {
            accumulate(&mut self.terms, m.clone(), *c);
        }
    }

    pub fn add_scaled(&mut self, other: &MtpExpr, s: f64) {
        for (m, c) in &other.terms {
            accumulate(&mut self.terms, m.clone(), c * s);
        }
    }

    pub fn sub(&self, other: &MtpExpr) -> MtpExpr {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    pub fn scale(&self, s: f64) -> MtpExpr {
        if s == 0.0 {
            return MtpExpr::zero();
        }
        MtpExpr { terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect() }
    }

    pub fn neg(&self) -> MtpExpr {
        self.scale(-1.0)
    }

    pub fn mul(&self, other: &MtpExpr) -> Result<MtpExpr, AlgebraError> {
        self.mul_with_budget(other, DEFAULT_TERM_BUDGET)
    }

    pub fn mul_with_budget(&self, other: &MtpExpr, budget: usize) -> Result<MtpExpr, AlgebraError> {
        let mut terms = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                for (w, m) in mul_monomials(ma, mb)? {
                    accumulate(&mut terms, m, ca * cb * w);
                }
            }
            if terms.len() > budget {
                return Err(AlgebraError::TermBudgetExceeded { budget });
            }
        }
        Ok(MtpExpr { terms })
    }

    pub fn pow(&self, n: u32) -> Result<MtpExpr, AlgebraError> {
        self.pow_with_budget(n, DEFAULT_TERM_BUDGET)
    }

    pub fn pow_with_budget(&self, n: u32, budget: usize) -> Result<MtpExpr, AlgebraError> {
        let mut out = MtpExpr::constant(1.0);
        for _ in 0..n {
            out = out.mul_with_budget(self, budget)?;
        }
        Ok(out)
    }

    /// `Σ c_i s_i + c0` when the expression is affine and free of trig atoms.
    pub fn as_affine(&self) -> Option<(Vec<(SymbolId, f64)>, f64)> {
        let mut linear = Vec::new();
        let mut c0 = 0.0;
        for (m, c) in &self.terms {
            match m.0.as_slice() {
                [] => c0 = *c,
                [Factor { sym, poly: 1, trig: None }] => linear.push((*sym, *c)),
                _ => return None,
            }
        }
        Some((linear, c0))
    }

    /// Replaces each mapped symbol by its expression, simultaneously.
    pub fn substitute_many(&self, map: &BTreeMap<SymbolId, MtpExpr>) -> Result<MtpExpr, AlgebraError> {
        self.substitute_many_with_budget(map, DEFAULT_TERM_BUDGET)
    }

    pub fn substitute_many_with_budget(
        &self,
        map: &BTreeMap<SymbolId, MtpExpr>,
        budget: usize,
    ) -> Result<MtpExpr, AlgebraError> {
        let mut images: HashMap<Factor, MtpExpr> = HashMap::new();
        let mut out = MtpExpr::zero();
        for (m, c) in &self.terms {
            let (hit, kept) = m.split(|s| map.contains_key(&s));
            let mut acc = MtpExpr::from_monomial(kept, *c);
            for f in &hit.0 {
                if !images.contains_key(f) {
                    let img = factor_image(f, &map[&f.sym], budget)?;
                    images.insert(*f, img);
                }
                acc = acc.mul_with_budget(&images[f], budget)?;
            }
            out.add_assign(&acc);
            if out.len() > budget {
                return Err(AlgebraError::TermBudgetExceeded { budget });
            }
        }
        Ok(out)
    }

    pub fn substitute(&self, sym: SymbolId, replacement: &MtpExpr) -> Result<MtpExpr, AlgebraError> {
        self.substitute_many(&BTreeMap::from([(sym, replacement.clone())]))
    }

    /// Substitutes numeric values; the result no longer mentions those symbols.
    pub fn substitute_values(&self, values: &BTreeMap<SymbolId, f64>) -> MtpExpr {
        let mut out = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut coef = *c;
            let mut kept = Vec::with_capacity(m.0.len());
            for f in &m.0 {
                match values.get(&f.sym) {
                    Some(v) => coef *= f.eval(*v),
                    None => kept.push(*f),
                }
            }
            accumulate(&mut out, Monomial(kept), coef);
        }
        MtpExpr { terms: out }
    }

    pub fn derivative(&self, sym: SymbolId) -> MtpExpr {
        let mut out = BTreeMap::new();
        for (m, c) in &self.terms {
            let Some(pos) = m.0.iter().position(|f| f.sym == sym) else { continue };
            let f = m.0[pos];
            let mut push = |coef: f64, poly: u32, trig: Option<TrigAtom>| {
                if coef == 0.0 {
                    return;
                }
                let mut factors = m.0.clone();
                let trig = trig.filter(|t| t.degree() > 0);
                if poly == 0 && trig.is_none() {
                    factors.remove(pos);
                } else {
                    factors[pos] = Factor { sym, poly, trig };
                }
                accumulate(&mut out, Monomial(factors), c * coef);
            };
            if f.poly > 0 {
                push(f.poly as f64, f.poly - 1, f.trig);
            }
            if let Some(t) = f.trig {
                // d cos^b = -b s cos^{b-1} sin, d sin^c = c s sin^{c-1} cos
                if t.cos > 0 {
                    push(-(t.cos as f64) * t.scale, f.poly, Some(TrigAtom { cos: t.cos - 1, sin: t.sin + 1, ..t }));
                }
                if t.sin > 0 {
                    push(t.sin as f64 * t.scale, f.poly, Some(TrigAtom { cos: t.cos + 1, sin: t.sin - 1, ..t }));
                }
            }
        }
        MtpExpr { terms: out }
    }

    /// Numeric value with `values[id]` for every symbol id in the expression.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(values)).sum()
    }

    /// Drops terms smaller than `rel` times the largest coefficient.
    pub fn prune(&self, rel: f64) -> MtpExpr {
        let max = self.terms.values().fold(0.0f64, |a, c| a.max(c.abs()));
        let cut = rel * max;
        MtpExpr { terms: self.terms.iter().filter(|(_, c)| c.abs() > cut).map(|(m, c)| (m.clone(), *c)).collect() }
    }

    /// Rewrites every atom of `sym` as a polynomial in `cos(base sym)`, `sin(base sym)`.
    pub fn rebase(&self, sym: SymbolId, base: f64) -> Result<MtpExpr, AlgebraError> {
        let mut out = BTreeMap::new();
        for (m, c) in &self.terms {
            let Some(pos) = m.0.iter().position(|f| f.sym == sym) else {
                accumulate(&mut out, m.clone(), *c);
                continue;
            };
            let f = m.0[pos];
            let Some(t) = f.trig else {
                accumulate(&mut out, m.clone(), *c);
                continue;
            };
            if t.scale.to_bits() == base.to_bits() && t.phase == 0.0 {
                accumulate(&mut out, m.clone(), *c);
                continue;
            }
            let poly = atom_as_poly(&t, base).ok_or(AlgebraError::IncompatibleAtoms { sym, a: t.scale, b: base })?;
            for (w, atom) in poly_to_atoms(poly, base) {
                let mut factors = m.0.clone();
                if f.poly == 0 && atom.is_none() {
                    factors.remove(pos);
                } else {
                    factors[pos] = Factor { sym, poly: f.poly, trig: atom };
                }
                accumulate(&mut out, Monomial(factors), c * w);
            }
        }
        Ok(MtpExpr { terms: out })
    }

    pub fn display<'a>(&'a self, table: &'a SymbolTable) -> impl fmt::Display + 'a {
        DisplayExpr { e: self, table }
    }
}

/// Image of one factor `s^p cos^b(a s + φ) sin^c(a s + φ)` under `s -> r`.
fn factor_image(f: &Factor, r: &MtpExpr, budget: usize) -> Result<MtpExpr, AlgebraError> {
    let mut out = r.pow_with_budget(f.poly, budget)?;
    if let Some(t) = f.trig {
        let Some((linear, c0)) = r.as_affine() else {
            return Err(AlgebraError::NonAffineTrigArgument { func: "cos/sin", arg: format!("{} terms", r.len()) });
        };
        let scaled: Vec<(SymbolId, f64)> = linear.iter().map(|(s, c)| (*s, c * t.scale)).collect();
        let c0 = c0 * t.scale + t.phase;
        if t.cos > 0 {
            let c = expand_affine_trig(TrigFn::Cos, &scaled, c0);
            out = out.mul_with_budget(&c.pow_with_budget(t.cos, budget)?, budget)?;
        }
        if t.sin > 0 {
            let s = expand_affine_trig(TrigFn::Sin, &scaled, c0);
            out = out.mul_with_budget(&s.pow_with_budget(t.sin, budget)?, budget)?;
        }
    }
    Ok(out)
}

/// Product of expressions that share no symbols; never needs atom merging.
fn disjoint_product(a: &MtpExpr, b: &MtpExpr) -> MtpExpr {
    let mut terms = BTreeMap::new();
    for (ma, ca) in &a.terms {
        for (mb, cb) in &b.terms {
            let mut f = ma.0.clone();
            f.extend_from_slice(&mb.0);
            accumulate(&mut terms, Monomial::from_factors(f), ca * cb);
        }
    }
    MtpExpr { terms }
}

/// `cos` or `sin` of `Σ c_i s_i + c0`, expanded by angle addition into
/// single-symbol atoms of scale `|c_i|` and constant factors `cos c0`, `sin c0`.
///
/// Each symbol must appear at most once in `linear`.
pub fn expand_affine_trig(func: TrigFn, linear: &[(SymbolId, f64)], c0: f64) -> MtpExpr {
    let mut c = MtpExpr::constant(snap(c0.cos()));
    let mut s = MtpExpr::constant(snap(c0.sin()));
    for &(sym, k) in linear {
        if k == 0.0 {
            continue;
        }
        let ca = MtpExpr::atom(sym, k, 0.0, 1, 0);
        let sa = MtpExpr::atom(sym, k, 0.0, 0, 1);
        let nc = disjoint_product(&c, &ca).sub(&disjoint_product(&s, &sa));
        let ns = disjoint_product(&s, &ca).add(&disjoint_product(&c, &sa));
        c = nc;
        s = ns;
    }
    match func {
        TrigFn::Cos => c,
        TrigFn::Sin => s,
    }
}

struct DisplayMonomial<'a> {
    m: &'a Monomial,
    table: &'a SymbolTable,
}

fn fmt_factor(f: &Factor, table: &SymbolTable, out: &mut Vec<String>) {
    let name = table.name(f.sym);
    match f.poly {
        0 => {}
        1 => out.push(name.to_string()),
        p => out.push(format!("{name}^{p}")),
    }
    if let Some(t) = f.trig {
        let mut arg = if t.scale == 1.0 { name.to_string() } else { format!("{}*{name}", t.scale) };
        if t.phase != 0.0 {
            arg = format!("{arg} + {}", t.phase);
        }
        for (func, p) in [("cos", t.cos), ("sin", t.sin)] {
            match p {
                0 => {}
                1 => out.push(format!("{func}({arg})")),
                p => out.push(format!("{func}({arg})^{p}")),
            }
        }
    }
}

impl fmt::Display for DisplayMonomial<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.m.is_one() {
            return write!(f, "1");
        }
        let mut parts = Vec::new();
        for factor in &self.m.0 {
            fmt_factor(factor, self.table, &mut parts);
        }
        write!(f, "{}", parts.join("*"))
    }
}

struct DisplayExpr<'a> {
    e: &'a MtpExpr,
    table: &'a SymbolTable,
}

impl fmt::Display for DisplayExpr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.e.is_zero() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.e.terms.iter().enumerate() {
            let (sign, mag) = if *c < 0.0 { ("-", -c) } else { ("+", *c) };
            if i == 0 {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if m.is_one() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{}", m.display(self.table))?;
            } else {
                write!(f, "{mag}*{}", m.display(self.table))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::SymbolKind;

    fn table() -> (SymbolTable, SymbolId, SymbolId, SymbolId) {
        let mut t = SymbolTable::new();
        let x = t.declare("x", SymbolKind::State).unwrap();
        let th = t.declare("theta", SymbolKind::State).unwrap();
        let w = t.declare("w", SymbolKind::Disturbance).unwrap();
        (t, x, th, w)
    }

    #[test]
    fn same_argument_atoms_merge() {
        let (_, _, th, _) = table();
        let p = MtpExpr::atom(th, 1.0, 0.0, 1, 0).mul(&MtpExpr::atom(th, 1.0, 0.0, 0, 1)).unwrap();
        assert_eq!(p.len(), 1);
        let (m, c) = p.terms().next().unwrap();
        assert_eq!(c, 1.0);
        let t = m.factors()[0].trig.unwrap();
        assert_eq!((t.cos, t.sin), (1, 1));
    }

    #[test]
    fn binomial_square() {
        let (tab, x, th, _) = table();
        let e = MtpExpr::symbol(x).add(&MtpExpr::atom(th, 1.0, 0.0, 1, 0));
        let sq = e.pow(2).unwrap();
        assert_eq!(sq.len(), 3);
        assert_eq!(sq.display(&tab).to_string(), "2*x*cos(theta) + x^2 + cos(theta)^2");
        assert_eq!(e.pow(0).unwrap(), MtpExpr::constant(1.0));
    }

    #[test]
    fn angle_addition() {
        let (tab, _, th, w) = table();
        let c = expand_affine_trig(TrigFn::Cos, &[(th, 1.0), (w, 1.0)], 0.0);
        assert_eq!(c.display(&tab).to_string(), "cos(theta)*cos(w) - sin(theta)*sin(w)");
        let s = expand_affine_trig(TrigFn::Sin, &[(w, 1.0)], std::f64::consts::FRAC_PI_2);
        assert_eq!(s, MtpExpr::atom(w, 1.0, 0.0, 1, 0));
    }

    #[test]
    fn negative_scale_is_flipped() {
        let (_, _, th, _) = table();
        let s = MtpExpr::atom(th, -2.0, 0.0, 0, 1);
        let (m, c) = s.terms().next().unwrap();
        assert_eq!(c, -1.0);
        assert_eq!(m.factors()[0].trig.unwrap().scale, 2.0);
    }

    #[test]
    fn integer_ratio_atoms_are_rewritten() {
        let (_, _, th, _) = table();
        let a = MtpExpr::atom(th, 1.0, 0.0, 1, 0);
        let b = MtpExpr::atom(th, 2.0, 0.0, 1, 0);
        let p = a.mul(&b).unwrap();
        let mut vals = vec![0.0; 3];
        for &v in &[0.3, -1.1, 2.5] {
            vals[th.0 as usize] = v;
            assert!((p.eval(&vals) - v.cos() * (2.0 * v).cos()).abs() < 1e-12);
        }
        let bad = a.mul(&MtpExpr::atom(th, 1.5, 0.0, 1, 0));
        assert!(matches!(bad, Err(AlgebraError::IncompatibleAtoms { .. })));
    }

    #[test]
    fn simultaneous_substitution() {
        let (_, x, th, w) = table();
        // x' = x + 0.5 cos(theta), theta' = theta + w applied to x*sin(theta)
        let g = MtpExpr::symbol(x).mul(&MtpExpr::atom(th, 1.0, 0.0, 0, 1)).unwrap();
        let map = BTreeMap::from([
            (x, MtpExpr::symbol(x).add(&MtpExpr::atom(th, 1.0, 0.0, 1, 0).scale(0.5))),
            (th, MtpExpr::symbol(th).add(&MtpExpr::symbol(w))),
        ]);
        let img = g.substitute_many(&map).unwrap();
        let vals: [f64; 3] = [0.7, 0.4, -0.9];
        let (xv, tv, wv) = (vals[0], vals[1], vals[2]);
        let want = (xv + 0.5 * tv.cos()) * (tv + wv).sin();
        assert!((img.eval(&vals) - want).abs() < 1e-12);
    }

    #[test]
    fn derivative_of_trig_poly() {
        let (_, x, th, _) = table();
        let e = MtpExpr::symbol(x).pow(2).unwrap().mul(&MtpExpr::atom(th, 3.0, 0.5, 2, 1)).unwrap();
        let vals = [1.3, 0.4, 0.0];
        let h = 1e-6;
        let num = |v: f64| {
            let mut vv = vals;
            vv[1] = v;
            e.eval(&vv)
        };
        let fd = (num(0.4 + h) - num(0.4 - h)) / (2.0 * h);
        assert!((e.derivative(th).eval(&vals) - fd).abs() < 1e-6);
        let fdx = {
            let mut a = vals;
            let mut b = vals;
            a[0] += h;
            b[0] -= h;
            (e.eval(&a) - e.eval(&b)) / (2.0 * h)
        };
        assert!((e.derivative(x).eval(&vals) - fdx).abs() < 1e-6);
    }

    #[test]
    fn budget_is_enforced() {
        let (_, x, th, w) = table();
        let e = MtpExpr::symbol(x).add(&MtpExpr::symbol(th)).add(&MtpExpr::symbol(w));
        assert!(matches!(e.pow_with_budget(6, 10), Err(AlgebraError::TermBudgetExceeded { budget: 10 })));
    }
}
