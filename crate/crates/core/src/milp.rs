//! Solver-agnostic MILP container, assignments, and solution checks.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("duplicate constraint name `{0}`")]
    DuplicateConstraint(String),
    #[error("unknown variable index {0}")]
    UnknownVariable(usize),
    #[error("variable `{0}` appears twice in `{1}`")]
    DuplicateTerm(String, String),
    #[error("binary variable `{0}` must have bounds [0, 1]")]
    BinaryBounds(String),
    #[error("invalid bounds on `{0}`")]
    InvalidBounds(String),
    #[error("assignment is missing variables: {}", .0.join(", "))]
    MissingVariables(Vec<String>),
    #[error("assignment names unknown variables: {}", .0.join(", "))]
    UnknownNames(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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

impl Variable {
    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            kind: VarKind::Continuous,
            lower,
            upper,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VarKind::Binary,
            lower: 0.0,
            upper: 1.0,
        }
    }

    pub fn is_binary(&self) -> bool {
        self.kind == VarKind::Binary
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

impl RowSense {
    pub fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    /// Sparse row as `(variable index, coefficient)` pairs in canonical order.
    pub terms: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(name: impl Into<String>, terms: Vec<(usize, f64)>, sense: RowSense, rhs: f64) -> Self {
        Self {
            name: name.into(),
            terms,
            sense,
            rhs,
        }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Signed amount by which the row is violated at `x`; zero or negative
    /// when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            RowSense::Le => lhs - self.rhs,
            RowSense::Ge => self.rhs - lhs,
            RowSense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A minimization MILP with binary and continuous variables.
///
/// Zero coefficients are dropped at construction, so the sparse rows and the
/// objective only ever hold nonzeros. Two problems compare equal when their
/// variables, objective, and rows agree in canonical order.
#[derive(Debug, Clone)]
pub struct MilpProblem {
    vars: Vec<Variable>,
    objective: Vec<(usize, f64)>,
    offset: f64,
    constraints: Vec<Constraint>,
    index: HashMap<String, usize>,
}

impl PartialEq for MilpProblem {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars
            && self.objective == other.objective
            && self.offset == other.offset
            && self.constraints == other.constraints
    }
}

impl MilpProblem {
    pub fn new(
        vars: Vec<Variable>,
        objective: Vec<(usize, f64)>,
        offset: f64,
        constraints: Vec<Constraint>,
    ) -> Result<Self, ModelError> {
        let mut index = HashMap::with_capacity(vars.len());
        for (j, v) in vars.iter().enumerate() {
            if index.insert(v.name.clone(), j).is_some() {
                return Err(ModelError::DuplicateVariable(v.name.clone()));
            }
            if v.is_binary() && (v.lower != 0.0 || v.upper != 1.0) {
                return Err(ModelError::BinaryBounds(v.name.clone()));
            }
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper || v.lower == f64::INFINITY {
                return Err(ModelError::InvalidBounds(v.name.clone()));
            }
        }
        let n = vars.len();
        let objective = clean_terms(objective, n, &vars, "objective")?;
        let mut seen = HashSet::with_capacity(constraints.len());
        let mut rows = Vec::with_capacity(constraints.len());
        for mut c in constraints {
            if !seen.insert(c.name.clone()) {
                return Err(ModelError::DuplicateConstraint(c.name));
            }
            c.terms = clean_terms(c.terms, n, &vars, &c.name)?;
            rows.push(c);
        }
        Ok(Self {
            vars,
            objective,
            offset,
            constraints: rows,
            index,
        })
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn objective(&self) -> &[(usize, f64)] {
        &self.objective
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn binary_indices(&self) -> Vec<usize> {
        (0..self.vars.len()).filter(|&j| self.vars[j].is_binary()).collect()
    }

    /// Dense objective coefficient vector.
    pub fn cost_vector(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.vars.len()];
        for &(j, a) in &self.objective {
            c[j] = a;
        }
        c
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.offset + self.objective.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }

    pub fn nonzeros(&self) -> usize {
        self.constraints.iter().map(|c| c.terms.len()).sum()
    }

    /// Dense value vector for a total assignment.
    pub fn dense_values(&self, a: &Assignment) -> Result<Vec<f64>, ModelError> {
        let unknown: Vec<String> = a
            .values
            .keys()
            .filter(|k| !self.index.contains_key(*k))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            return Err(ModelError::UnknownNames(unknown));
        }
        let mut missing = Vec::new();
        let x: Vec<f64> = self
            .vars
            .iter()
            .map(|v| match a.get(&v.name) {
                Some(val) => val,
                None => {
                    missing.push(v.name.clone());
                    0.0
                }
            })
            .collect();
        if missing.is_empty() {
            Ok(x)
        } else {
            Err(ModelError::MissingVariables(missing))
        }
    }

    /// Copy with every binary turned into a continuous `[0, 1]` variable.
    pub fn relaxed(&self) -> MilpProblem {
        let mut r = self.clone();
        for v in &mut r.vars {
            v.kind = VarKind::Continuous;
        }
        r
    }

    pub fn assignment_from(&self, x: &[f64]) -> Assignment {
        Assignment {
            values: self
                .vars
                .iter()
                .zip(x)
                .map(|(v, &val)| (v.name.clone(), val))
                .collect(),
        }
    }
}

fn clean_terms(
    terms: Vec<(usize, f64)>,
    n: usize,
    vars: &[Variable],
    owner: &str,
) -> Result<Vec<(usize, f64)>, ModelError> {
    let mut seen = HashSet::with_capacity(terms.len());
    let mut out = Vec::with_capacity(terms.len());
    for (j, a) in terms {
        if j >= n {
            return Err(ModelError::UnknownVariable(j));
        }
        if !seen.insert(j) {
            return Err(ModelError::DuplicateTerm(vars[j].name.clone(), owner.to_string()));
        }
        if a != 0.0 {
            out.push((j, a));
        }
    }
    Ok(out)
}

/// Variable name to value map. May be partial.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    values: BTreeMap<String, f64>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl FromIterator<(String, f64)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        Self {
            values: iter.into_iter().collect(),
        }
    }
}

/// Objective value of a total assignment, offset included.
pub fn evaluate_objective(p: &MilpProblem, a: &Assignment) -> Result<f64, ModelError> {
    let x = p.dense_values(a)?;
    Ok(p.objective_at(&x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Row,
    LowerBound,
    UpperBound,
    Integrality,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Constraint name for row violations, variable name otherwise.
    pub name: String,
    /// Positive magnitude of the violation. For equality rows the sign of
    /// `lhs - rhs` is kept.
    pub amount: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {} by {}", self.kind, self.name, self.amount)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_violation(&self) -> f64 {
        self.violations.iter().map(|v| v.amount.abs()).fold(0.0, f64::max)
    }
}

/// Lists every row, bound, and integrality violation larger than `tol`.
pub fn check_feasible(p: &MilpProblem, a: &Assignment, tol: f64) -> Result<FeasibilityReport, ModelError> {
    let x = p.dense_values(a)?;
    Ok(check_dense(p, &x, tol))
}

pub(crate) fn check_dense(p: &MilpProblem, x: &[f64], tol: f64) -> FeasibilityReport {
    let mut violations = Vec::new();
    for c in p.constraints() {
        let lhs = c.activity(x);
        let amount = match c.sense {
            RowSense::Le => lhs - c.rhs,
            RowSense::Ge => c.rhs - lhs,
            RowSense::Eq => lhs - c.rhs,
        };
        if amount.abs() > tol && (c.sense == RowSense::Eq || amount > 0.0) || amount.is_nan() {
            violations.push(Violation {
                kind: ViolationKind::Row,
                name: c.name.clone(),
                amount,
            });
        }
    }
    for (v, &val) in p.vars().iter().zip(x) {
        if val < v.lower - tol {
            violations.push(Violation {
                kind: ViolationKind::LowerBound,
                name: v.name.clone(),
                amount: v.lower - val,
            });
        }
        if val > v.upper + tol {
            violations.push(Violation {
                kind: ViolationKind::UpperBound,
                name: v.name.clone(),
                amount: val - v.upper,
            });
        }
        if v.is_binary() {
            let frac = (val - val.round()).abs();
            if frac > tol {
                violations.push(Violation {
                    kind: ViolationKind::Integrality,
                    name: v.name.clone(),
                    amount: frac,
                });
            }
        }
    }
    FeasibilityReport { violations }
}
