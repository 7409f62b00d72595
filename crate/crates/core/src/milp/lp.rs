//! Linear model container plus a writer and reader for the CPLEX LP text format.
//!
//! The writer lists every variable in the `Bounds` section in declaration
//! order (binaries included), so reading a written file back reproduces the
//! model exactly, variable order and all.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

/// Absolute slack allowed when checking a row; far below any ε in use.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Checked up to [`FEASIBILITY_TOLERANCE`], as an LP solver would.
    pub fn is_satisfied(&self, values: &[f64]) -> bool {
        let lhs = self.lhs(values);
        match self.sense {
            Sense::Le => lhs <= self.rhs + FEASIBILITY_TOLERANCE,
            Sense::Ge => lhs >= self.rhs - FEASIBILITY_TOLERANCE,
            Sense::Eq => (lhs - self.rhs).abs() <= FEASIBILITY_TOLERANCE,
        }
    }
}

/// A minimization model.
#[derive(Debug, Clone, Default)]
pub struct LpModel {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(VarId, f64)>,
    index: HashMap<String, VarId>,
}

impl PartialEq for LpModel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.variables == other.variables
            && self.constraints == other.constraints
            && self.objective == other.objective
    }
}

impl LpModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Default::default() }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> VarId {
        let name = name.into();
        let id = VarId(self.variables.len());
        let prev = self.index.insert(name.clone(), id);
        assert!(prev.is_none(), "duplicate variable {name}");
        self.variables.push(Variable { name, kind, lower, upper });
        id
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn add_constraint(&mut self, c: Constraint) -> usize {
        self.constraints.push(c);
        self.constraints.len() - 1
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.variables[v.0].name
    }

    pub fn n_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Every referenced variable is declared.
    pub fn references_are_valid(&self) -> bool {
        let n = self.variables.len();
        self.objective.iter().chain(self.constraints.iter().flat_map(|c| &c.terms)).all(|(v, _)| v.0 < n)
    }

    pub fn within_bounds(&self, values: &[f64]) -> bool {
        self.variables
            .iter()
            .zip(values)
            .all(|(v, &x)| v.lower <= x && x <= v.upper && (v.kind != VarKind::Binary || x == 0.0 || x == 1.0))
    }
}

const WRAP_AT: usize = 200;

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn write_terms(out: &mut String, model: &LpModel, terms: &[(VarId, f64)], mut line_len: usize) {
    for (i, &(v, a)) in terms.iter().enumerate() {
        let name = model.var_name(v);
        let piece = if i == 0 {
            format!(" {} {name}", fmt_num(a))
        } else if a < 0.0 || (a == 0.0 && a.is_sign_negative()) {
            format!(" - {} {name}", fmt_num(-a))
        } else {
            format!(" + {} {name}", fmt_num(a))
        };
        if line_len + piece.len() > WRAP_AT {
            out.push_str("\n  ");
            line_len = 2;
        }
        line_len += piece.len();
        out.push_str(&piece);
    }
}

pub fn write_lp(model: &LpModel) -> String {
    let mut out = String::new();
    writeln!(out, "\\ Problem: {}", model.name).unwrap();
    out.push_str("Minimize\n obj:");
    if model.objective.is_empty() {
        out.push_str(" 0");
    } else {
        write_terms(&mut out, model, &model.objective, 5);
    }
    out.push_str("\nSubject To\n");
    for c in &model.constraints {
        write!(out, " {}:", c.name).unwrap();
        if c.terms.is_empty() {
            out.push_str(" 0");
        } else {
            write_terms(&mut out, model, &c.terms, c.name.len() + 2);
        }
        writeln!(out, " {} {}", c.sense.symbol(), fmt_num(c.rhs)).unwrap();
    }
    out.push_str("Bounds\n");
    for v in &model.variables {
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => writeln!(out, " {} free", v.name),
            (true, false) => writeln!(out, " {} >= {}", v.name, fmt_num(v.lower)),
            _ => writeln!(out, " {} <= {} <= {}", fmt_num(v.lower), v.name, fmt_num(v.upper)),
        }
        .unwrap();
    }
    out.push_str("Binaries\n");
    for v in model.variables.iter().filter(|v| v.kind == VarKind::Binary) {
        writeln!(out, " {}", v.name).unwrap();
    }
    out.push_str("End\n");
    out
}

pub fn write_lp_file(model: &LpModel, path: &Path) -> Result<()> {
    std::fs::write(path, write_lp(model)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Generals,
}

fn section_header(line: &str) -> Option<Option<Section>> {
    match line.to_ascii_lowercase().as_str() {
        "minimize" | "minimise" | "min" => Some(Some(Section::Objective)),
        "subject to" | "such that" | "st" | "s.t." => Some(Some(Section::Constraints)),
        "bounds" | "bound" => Some(Some(Section::Bounds)),
        "binaries" | "binary" | "bin" => Some(Some(Section::Binaries)),
        "generals" | "general" | "gen" => Some(Some(Section::Generals)),
        "end" => Some(None),
        _ => None,
    }
}

type Token<'a> = (usize, &'a str);

fn parse_num(tok: &str) -> Option<f64> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        t if t.starts_with(|c: char| c.is_ascii_digit() || c == '.' || c == '-' || c == '+') => t.parse().ok(),
        _ => None,
    }
}

fn parse_sense(tok: &str) -> Option<Sense> {
    match tok {
        "<=" | "=<" | "<" => Some(Sense::Le),
        ">=" | "=>" | ">" => Some(Sense::Ge),
        "=" => Some(Sense::Eq),
        _ => None,
    }
}

/// Terms, trailing constant, tokens consumed.
type ParsedTerms = (Vec<(VarId, f64)>, f64, usize);

struct Reader {
    model: LpModel,
}

impl Reader {
    fn resolve(&mut self, name: &str) -> VarId {
        match self.model.var(name) {
            Some(v) => v,
            None => self.model.add_var(name, VarKind::Continuous, 0.0, f64::INFINITY),
        }
    }

    /// Parses `[sign] [coef] name` terms until a sense token or the end.
    /// Returns the terms, the trailing constant (a coefficient with no name),
    /// and how many tokens were consumed.
    fn terms(&mut self, toks: &[Token]) -> Result<ParsedTerms> {
        let mut terms = Vec::new();
        let mut constant = 0.0;
        let mut i = 0;
        while i < toks.len() && parse_sense(toks[i].1).is_none() {
            let mut sign = 1.0;
            while i < toks.len() && (toks[i].1 == "+" || toks[i].1 == "-") {
                if toks[i].1 == "-" {
                    sign = -sign;
                }
                i += 1;
            }
            let line = toks.get(i).map_or(toks[toks.len() - 1].0, |t| t.0);
            let Some(&(_, tok)) = toks.get(i) else {
                return Err(Error::LpParse { line, message: "dangling sign".into() });
            };
            if let Some(coef) = parse_num(tok) {
                i += 1;
                match toks.get(i) {
                    Some(&(_, name))
                        if parse_sense(name).is_none() && parse_num(name).is_none() && name != "+" && name != "-" =>
                    {
                        terms.push((self.resolve(name), sign * coef));
                        i += 1;
                    }
                    _ => constant += sign * coef,
                }
            } else {
                terms.push((self.resolve(tok), sign));
                i += 1;
            }
        }
        Ok((terms, constant, i))
    }
}

pub fn read_lp(text: &str) -> Result<LpModel> {
    let mut name = String::new();
    let mut sections: Vec<(Section, Vec<Token>)> = Vec::new();
    let mut current: Option<Section> = None;
    let mut ended = false;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('\\') {
            if let Some(p) = rest.trim().strip_prefix("Problem:") {
                name = p.trim().to_string();
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if ended {
            return Err(Error::LpParse { line: line_no, message: "content after End".into() });
        }
        if let Some(header) = section_header(line) {
            match header {
                Some(s) => {
                    current = Some(s);
                    sections.push((s, Vec::new()));
                }
                None => ended = true,
            }
            continue;
        }
        let Some(_) = current else {
            return Err(Error::LpParse { line: line_no, message: format!("text before any section: {line:?}") });
        };
        let toks = &mut sections.last_mut().unwrap().1;
        for tok in line.split_whitespace() {
            // Labels may be glued to their first term ("c1:x").
            match tok.find(':') {
                Some(p) if p + 1 < tok.len() => {
                    toks.push((line_no, &tok[..=p]));
                    toks.push((line_no, &tok[p + 1..]));
                }
                _ => toks.push((line_no, tok)),
            }
        }
    }
    if !ended {
        return Err(Error::LpParse { line: text.lines().count(), message: "missing End".into() });
    }

    let mut rd = Reader { model: LpModel::new(name) };
    // Bounds first so declaration order follows the Bounds listing.
    for (_, toks) in sections.iter().filter(|(s, _)| *s == Section::Bounds) {
        read_bounds(&mut rd, toks)?;
    }
    let mut objective = Vec::new();
    let mut constraints = Vec::new();
    for (section, toks) in &sections {
        match section {
            Section::Objective => {
                let mut t = &toks[..];
                if t.first().is_some_and(|x| x.1.ends_with(':')) {
                    t = &t[1..];
                }
                let (terms, constant, used) = rd.terms(t)?;
                if used != t.len() {
                    return Err(Error::LpParse { line: t[used].0, message: "unexpected token in objective".into() });
                }
                if constant != 0.0 {
                    return Err(Error::LpParse {
                        line: t.first().map_or(0, |x| x.0),
                        message: "objective constants are not supported".into(),
                    });
                }
                objective.extend(terms);
            }
            Section::Constraints => {
                let mut t = &toks[..];
                let mut k = 0usize;
                while !t.is_empty() {
                    let line = t[0].0;
                    let cname = match t[0].1.strip_suffix(':') {
                        Some(label) => {
                            t = &t[1..];
                            label.to_string()
                        }
                        None => format!("R{k}"),
                    };
                    let (terms, constant, used) = rd.terms(t)?;
                    t = &t[used..];
                    let (Some(sense), Some(rhs)) =
                        (t.first().and_then(|x| parse_sense(x.1)), t.get(1).and_then(|x| parse_num(x.1)))
                    else {
                        return Err(Error::LpParse {
                            line,
                            message: format!("constraint {cname} lacks a sense and rhs"),
                        });
                    };
                    t = &t[2..];
                    constraints.push(Constraint { name: cname, terms, sense, rhs: rhs - constant });
                    k += 1;
                }
            }
            Section::Binaries => {
                for &(_, tok) in toks {
                    let v = rd.resolve(tok);
                    let var = &mut rd.model.variables[v.0];
                    if var.kind != VarKind::Binary {
                        var.kind = VarKind::Binary;
                        if var.upper == f64::INFINITY {
                            var.upper = 1.0;
                        }
                    }
                }
            }
            Section::Generals => {
                return Err(Error::LpParse {
                    line: toks.first().map_or(0, |x| x.0),
                    message: "general integer variables are not supported".into(),
                })
            }
            Section::Bounds => {}
        }
    }
    rd.model.objective = objective;
    rd.model.constraints = constraints;
    Ok(rd.model)
}

fn read_bounds(rd: &mut Reader, toks: &[Token]) -> Result<()> {
    // Bound lines are self-delimiting per line; regroup by line number.
    let mut i = 0;
    while i < toks.len() {
        let line = toks[i].0;
        let j = toks[i..].iter().position(|t| t.0 != line).map_or(toks.len(), |p| i + p);
        let row: Vec<&str> = toks[i..j].iter().map(|t| t.1).collect();
        let bad = || Error::LpParse { line, message: format!("unrecognized bound {:?}", row.join(" ")) };
        match row.as_slice() {
            [name, free] if free.eq_ignore_ascii_case("free") => {
                let v = rd.resolve(name);
                rd.model.variables[v.0].lower = f64::NEG_INFINITY;
                rd.model.variables[v.0].upper = f64::INFINITY;
            }
            [lo, "<=", name, "<=", hi] => {
                let (lo, hi) = (parse_num(lo).ok_or_else(bad)?, parse_num(hi).ok_or_else(bad)?);
                let v = rd.resolve(name);
                rd.model.variables[v.0].lower = lo;
                rd.model.variables[v.0].upper = hi;
            }
            [name, op, val] => {
                let val = parse_num(val).ok_or_else(bad)?;
                let v = rd.resolve(name);
                let var = &mut rd.model.variables[v.0];
                match parse_sense(op).ok_or_else(bad)? {
                    Sense::Le => var.upper = val,
                    Sense::Ge => var.lower = val,
                    Sense::Eq => {
                        var.lower = val;
                        var.upper = val;
                    }
                }
            }
            _ => return Err(bad()),
        }
        i = j;
    }
    Ok(())
}

pub fn read_lp_file(path: &Path) -> Result<LpModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_lp(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_model_round_trips() {
        let m = LpModel::new("empty");
        let text = write_lp(&m);
        assert_eq!(text, "\\ Problem: empty\nMinimize\n obj: 0\nSubject To\nBounds\nBinaries\nEnd\n");
        assert_eq!(read_lp(&text).unwrap(), m);
    }

    #[test]
    fn reads_hand_written_file() {
        let text = "\\ Problem: tiny\nMinimize\n obj: x + 2 y\nSubject To\n c1: x + y >= 1\n c2:x - y <= 0.5\n 3 y\n  <= 9\nBounds\n -1 <= x <= 4\n y free\nBinaries\n b\nEnd\n";
        let m = read_lp(text).unwrap();
        assert_eq!(m.variables.iter().map(|v| v.name.as_str()).collect::<Vec<_>>(), ["x", "y", "b"]);
        assert_eq!(m.variables[1].lower, f64::NEG_INFINITY);
        assert_eq!(m.variables[2].kind, VarKind::Binary);
        assert_eq!(m.constraints.len(), 3);
        assert_eq!(m.constraints[1].terms, vec![(VarId(0), 1.0), (VarId(1), -1.0)]);
        assert_eq!(m.constraints[2].name, "R2");
        assert_eq!(m.constraints[2].rhs, 9.0);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let err = read_lp("Minimize\n obj: x\nSubject To\n c1: x + y\nEnd\n").unwrap_err();
        assert!(matches!(err, Error::LpParse { line: 4, .. }), "{err}");
        assert!(read_lp("Minimize\n obj: x\n").is_err());
    }

    fn model_strategy() -> impl Strategy<Value = LpModel> {
        let var = (any::<bool>(), -1e3..1e3f64, 0.0..1e3f64, 0..3u8);
        let row = (prop::collection::vec((0..12usize, -1e4..1e4f64), 0..40), 0..3u8, -1e4..1e4f64);
        (
            prop::collection::vec(var, 1..12),
            prop::collection::vec(row, 0..20),
            prop::collection::vec((0..12usize, -5.0..5.0f64), 0..4),
        )
            .prop_map(|(vars, rows, obj)| {
                let mut m = LpModel::new("prop");
                for (i, (bin, lo, w, kind)) in vars.iter().enumerate() {
                    if *bin {
                        m.add_binary(format!("b{i}"));
                    } else {
                        let (l, u) = match kind {
                            0 => (*lo, lo + w),
                            1 => (*lo, f64::INFINITY),
                            _ => (f64::NEG_INFINITY, f64::INFINITY),
                        };
                        m.add_var(format!("x{i}"), VarKind::Continuous, l, u);
                    }
                }
                let n = m.variables.len();
                for (k, (terms, sense, rhs)) in rows.into_iter().enumerate() {
                    let sense = [Sense::Le, Sense::Ge, Sense::Eq][sense as usize];
                    let terms = terms.into_iter().map(|(v, a)| (VarId(v % n), a)).collect();
                    m.add_constraint(Constraint { name: format!("c{k}"), terms, sense, rhs });
                }
                m.objective = obj.into_iter().map(|(v, a)| (VarId(v % n), a)).collect();
                m
            })
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(m in model_strategy()) {
            let text = write_lp(&m);
            let back = read_lp(&text).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(write_lp(&back), text);
        }
    }
}
