//! Big-M encodings of AND, OR and IF-THEN-ELSE over binary variables.
//!
//! The rows are emitted in the printed form (`δ_i = 1 - d_i` for AND) and
//! only then normalized to `terms sense rhs`.
//!
//! IF-THEN-ELSE semantics, for a fixed value of `f(x)`:
//!
//! | `f(x)`            | feasible `d` |
//! |-------------------|--------------|
//! | `[-M, 0]`         | `{1}`        |
//! | `(0, ε)`          | none         |
//! | `[ε, M]`          | `{0}`        |

use serde::{Deserialize, Serialize};

use super::lp::{Constraint, Sense, VarId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MilpParams {
    pub big_m: f64,
    pub epsilon: f64,
    pub n_faces: usize,
}

impl Default for MilpParams {
    fn default() -> Self {
        Self { big_m: 200.0, epsilon: 0.01, n_faces: 4 }
    }
}

impl MilpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.big_m.is_finite() && self.big_m > 0.0) {
            return Err(Error::invalid("milp.big_m", format!("{} must be > 0", self.big_m)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid("milp.epsilon", format!("{} must be in (0, 1)", self.epsilon)));
        }
        if self.n_faces < 3 {
            return Err(Error::invalid("milp.n_faces", format!("{} < 3", self.n_faces)));
        }
        Ok(())
    }

    /// A gate over `n` inputs needs `n <= M + ε` for its all-false row.
    pub fn check_fan_in(&self, n: usize, what: &str) -> Result<()> {
        if n as f64 > self.big_m + self.epsilon {
            return Err(Error::BigMTooSmall {
                bound: format!("{what} with {n} inputs"),
                required: n as f64,
                big_m: self.big_m,
            });
        }
        Ok(())
    }

    /// `f(x)` must stay inside `[-M, M]` for both branches to remain feasible.
    pub fn check_range(&self, lo: f64, hi: f64, what: &str) -> Result<()> {
        if hi > self.big_m || lo < -self.big_m {
            return Err(Error::BigMTooSmall {
                bound: format!("{what} ranges over [{lo}, {hi}]"),
                required: hi.max(-lo),
                big_m: self.big_m,
            });
        }
        Ok(())
    }
}

/// Affine expression `Σ a_i x_i + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        Self { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn plus(mut self, other: &LinExpr, scale: f64) -> Self {
        self.terms.extend(other.terms.iter().map(|&(v, a)| (v, a * scale)));
        self.constant += other.constant * scale;
        self
    }

    pub fn add_term(mut self, v: VarId, a: f64) -> Self {
        self.terms.push((v, a));
        self
    }

    pub fn value(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.0]).sum::<f64>() + self.constant
    }

    /// `self sense rhs` with the constant moved right, like terms merged in
    /// first-appearance order, and zero coefficients dropped.
    pub fn into_constraint(self, name: impl Into<String>, sense: Sense, rhs: f64) -> Constraint {
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for (v, a) in self.terms {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(slot) => slot.1 += a,
                None => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        Constraint { name: name.into(), terms: merged, sense, rhs: rhs - self.constant }
    }
}

/// A binary variable or its complement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Literal {
    pub var: VarId,
    pub negated: bool,
}

impl Literal {
    pub fn pos(var: VarId) -> Self {
        Self { var, negated: false }
    }

    pub fn neg(var: VarId) -> Self {
        Self { var, negated: true }
    }

    pub fn expr(&self) -> LinExpr {
        if self.negated {
            LinExpr::constant(1.0).add_term(self.var, -1.0)
        } else {
            LinExpr::var(self.var)
        }
    }
}

/// `output = AND(inputs)`, via `-Σδ_i + δ <= ε` and `Σδ_i - Mδ <= ε`
/// with `δ_i = 1 - d_i`, `δ = 1 - d`.
pub fn encode_and(inputs: &[Literal], output: VarId, params: &MilpParams, name: &str) -> [Constraint; 2] {
    let one = LinExpr::constant(1.0);
    let delta_sum = inputs.iter().fold(LinExpr::default(), |acc, lit| acc.plus(&one, 1.0).plus(&lit.expr(), -1.0));
    let delta = one.clone().add_term(output, -1.0);
    let a = LinExpr::default().plus(&delta_sum, -1.0).plus(&delta, 1.0);
    let b = delta_sum.plus(&delta, -params.big_m);
    [
        a.into_constraint(format!("and_a_{name}"), Sense::Le, params.epsilon),
        b.into_constraint(format!("and_b_{name}"), Sense::Le, params.epsilon),
    ]
}

/// `output = OR(inputs)`, via `-Σf_i + f <= ε` and `Σf_i - Mf <= ε`.
pub fn encode_or(inputs: &[Literal], output: VarId, params: &MilpParams, name: &str) -> [Constraint; 2] {
    let sum = inputs.iter().fold(LinExpr::default(), |acc, lit| acc.plus(&lit.expr(), 1.0));
    let a = LinExpr::default().plus(&sum, -1.0).add_term(output, 1.0);
    let b = sum.add_term(output, -params.big_m);
    [
        a.into_constraint(format!("or_a_{name}"), Sense::Le, params.epsilon),
        b.into_constraint(format!("or_b_{name}"), Sense::Le, params.epsilon),
    ]
}

/// `IF f(x) <= 0 THEN d = 1 ELSE d = 0`, via `f(x) <= M(1 - d)` and
/// `f(x) >= ε - (M + ε) d`. See the module docs for the `(0, ε)` gap.
pub fn encode_if_then_else(f: &LinExpr, indicator: VarId, params: &MilpParams, name: &str) -> [Constraint; 2] {
    let (m, eps) = (params.big_m, params.epsilon);
    let upper = f.clone().add_term(indicator, m);
    let lower = f.clone().add_term(indicator, m + eps);
    [
        upper.into_constraint(format!("ite_u_{name}"), Sense::Le, m),
        lower.into_constraint(format!("ite_l_{name}"), Sense::Ge, eps),
    ]
}
