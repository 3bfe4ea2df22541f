use std::collections::HashSet;
use std::fmt;

use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::Rational;

pub type VarId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: Rational,
    /// `None` is +infinity.
    pub upper: Option<Rational>,
    pub integer: bool,
    pub objective: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, Rational)>,
    pub sense: Sense,
    pub rhs: Rational,
}

impl Constraint {
    pub fn new(name: impl Into<String>, terms: Vec<(VarId, Rational)>, sense: Sense, rhs: Rational) -> Self {
        Self { name: name.into(), terms, sense, rhs }
    }

    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| to_f64(c) * values[v]).sum()
    }

    /// Amount by which `values` violates the row; zero or negative when satisfied.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        let rhs = to_f64(self.rhs);
        match self.sense {
            Sense::Le => lhs - rhs,
            Sense::Ge => rhs - lhs,
            Sense::Eq => (lhs - rhs).abs(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("duplicate name {0:?}")]
    DuplicateName(String),
    #[error("constraint {row:?} references unknown variable {var}")]
    UnknownVariable { row: String, var: VarId },
    #[error("variable {0:?} has lower bound above upper bound")]
    EmptyDomain(String),
}

/// A minimization model over bounded variables with linear rows.
#[derive(Debug, Clone, Default)]
pub struct LinearModel {
    pub name: String,
    vars: Vec<Variable>,
    cons: Vec<Constraint>,
    names: HashSet<String>,
}

pub fn to_f64(r: Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

impl LinearModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Default::default() }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: Rational,
        upper: Option<Rational>,
        integer: bool,
        objective: Rational,
    ) -> Result<VarId, ModelError> {
        let name = name.into();
        if upper.is_some_and(|u| u < lower) {
            return Err(ModelError::EmptyDomain(name));
        }
        if !self.names.insert(name.clone()) {
            return Err(ModelError::DuplicateName(name));
        }
        self.vars.push(Variable { name, lower, upper, integer, objective });
        Ok(self.vars.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>, objective: Rational) -> Result<VarId, ModelError> {
        self.add_var(name, Rational::zero(), Some(Rational::from_integer(1)), true, objective)
    }

    pub fn add_constraint(&mut self, con: Constraint) -> Result<usize, ModelError> {
        if let Some(&(var, _)) = con.terms.iter().find(|(v, _)| *v >= self.vars.len()) {
            return Err(ModelError::UnknownVariable { row: con.name, var });
        }
        if !self.names.insert(con.name.clone()) {
            return Err(ModelError::DuplicateName(con.name));
        }
        self.cons.push(con);
        Ok(self.cons.len() - 1)
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.cons
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.cons.len()
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn n_integer(&self) -> usize {
        self.vars.iter().filter(|v| v.integer).count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.vars.iter().zip(values).map(|(v, &x)| to_f64(v.objective) * x).sum()
    }

    /// Copy with every integrality flag dropped.
    pub fn relaxed(&self) -> LinearModel {
        let mut m = self.clone();
        for v in &mut m.vars {
            v.integer = false;
        }
        m
    }

    /// Checks bounds, integrality and rows at absolute tolerance `tol`.
    pub fn is_feasible(&self, values: &[f64], tol: f64) -> bool {
        if values.len() != self.vars.len() {
            return false;
        }
        let bounds_ok = self.vars.iter().zip(values).all(|(v, &x)| {
            x >= to_f64(v.lower) - tol
                && v.upper.is_none_or(|u| x <= to_f64(u) + tol)
                && (!v.integer || (x - x.round()).abs() <= tol)
        });
        bounds_ok && self.cons.iter().all(|c| c.violation(values) <= tol)
    }

    /// Objective row `sum c_j x_j` as constraint terms.
    pub fn objective_terms(&self) -> Vec<(VarId, Rational)> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.objective.is_zero())
            .map(|(k, v)| (k, v.objective))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    #[test]
    fn rejects_duplicates_and_dangling_terms() {
        let mut m = LinearModel::new("t");
        let x = m.add_var("x", r(0), None, false, r(1)).unwrap();
        assert_eq!(m.add_var("x", r(0), None, false, r(1)), Err(ModelError::DuplicateName("x".into())));
        assert!(matches!(
            m.add_constraint(Constraint::new("c", vec![(x + 5, r(1))], Sense::Le, r(1))),
            Err(ModelError::UnknownVariable { .. })
        ));
        assert!(matches!(m.add_var("y", r(2), Some(r(1)), false, r(0)), Err(ModelError::EmptyDomain(_))));
    }

    #[test]
    fn feasibility_and_violation() {
        let mut m = LinearModel::new("t");
        let x = m.add_binary("x", r(3)).unwrap();
        let y = m.add_binary("y", r(2)).unwrap();
        m.add_constraint(Constraint::new("c", vec![(x, r(1)), (y, r(1))], Sense::Le, r(1))).unwrap();
        assert!(m.is_feasible(&[1.0, 0.0], 1e-9));
        assert!(!m.is_feasible(&[1.0, 1.0], 1e-9));
        assert!(!m.is_feasible(&[0.5, 0.0], 1e-9));
        assert!(m.relaxed().is_feasible(&[0.5, 0.5], 1e-9));
        assert_eq!(m.constraints()[0].violation(&[1.0, 1.0]), 1.0);
        assert_eq!(m.objective_value(&[1.0, 1.0]), 5.0);
    }
}
