//! Exact LP and MILP solving.

mod bnb;
mod simplex;
mod solution_csv;

use std::time::Duration;

use thiserror::Error;

pub use bnb::{brute_force_milp, solve_fixed, solve_milp, BRUTE_FORCE_MAX_BINARIES};
pub use simplex::LpStatus;
pub use solution_csv::{parse_solution_csv, write_solution_csv, SolutionFile};

use crate::milp::{Assignment, MilpProblem};

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("numerical breakdown in the LP solver")]
    Numerical,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("binary variables left unfixed: {}", .0.join(", "))]
    UnfixedBinaries(Vec<String>),
    #[error("invalid fixing for `{0}`: {1}")]
    BadFixing(String, String),
    #[error("brute force refuses {0} binaries (limit {BRUTE_FORCE_MAX_BINARIES})")]
    TooManyBinaries(usize),
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Total when optimal, empty otherwise.
    pub values: Assignment,
    /// Optimal value; `+inf` when infeasible, `-inf` when unbounded, NaN on
    /// numerical failure.
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnbStatus {
    Optimal,
    Infeasible,
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbResult {
    pub status: BnbStatus,
    pub incumbent: Option<Assignment>,
    pub objective: Option<f64>,
    pub nodes_explored: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub feas_tol: f64,
    pub int_tol: f64,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feas_tol: 1e-6,
            int_tol: 1e-6,
            node_limit: 1_000_000,
            time_limit: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.feas_tol > 0.0 && self.int_tol > 0.0) {
            return Err(SolveError::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

fn lp_solution(p: &MilpProblem, raw: simplex::RawLp) -> LpSolution {
    let (values, objective) = match raw.status {
        LpStatus::Optimal => (p.assignment_from(&raw.x), raw.objective),
        LpStatus::Infeasible => (Assignment::new(), f64::INFINITY),
        LpStatus::Unbounded => (Assignment::new(), f64::NEG_INFINITY),
        LpStatus::NumericalFailure => (Assignment::new(), f64::NAN),
    };
    LpSolution {
        status: raw.status,
        values,
        objective,
        iterations: raw.iterations,
    }
}

/// LP relaxation of `p`: integrality is ignored, bounds are kept.
pub fn solve_lp(p: &MilpProblem) -> LpSolution {
    let lower: Vec<f64> = p.vars().iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = p.vars().iter().map(|v| v.upper).collect();
    lp_solution(p, simplex::solve_relaxation(p, &lower, &upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{check_feasible, Constraint, RowSense, Variable};
    use crate::uc::{build_milp, fixtures};

    #[test]
    fn maximize_single_variable() {
        let p = MilpProblem::new(
            vec![Variable::continuous("x", 0.0, f64::INFINITY)],
            vec![(0, -1.0)],
            0.0,
            vec![Constraint::new("c", vec![(0, 1.0)], RowSense::Le, 5.0)],
        )
        .unwrap();
        let s = solve_lp(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.values.get("x"), Some(5.0));
        assert_eq!(s.objective, -5.0);
    }

    #[test]
    fn contradictory_bounds_infeasible() {
        let p = MilpProblem::new(
            vec![Variable::continuous("x", 0.0, f64::INFINITY)],
            vec![],
            0.0,
            vec![
                Constraint::new("lo", vec![(0, 1.0)], RowSense::Ge, 1.0),
                Constraint::new("hi", vec![(0, 1.0)], RowSense::Le, 0.0),
            ],
        )
        .unwrap();
        let s = solve_lp(&p);
        assert_eq!(s.status, LpStatus::Infeasible);
        assert!(s.values.is_empty());
    }

    #[test]
    fn uc_relaxation_bounded_by_integer_optimum() {
        let p = build_milp(&fixtures::two_unit_one_period()).unwrap();
        let s = solve_lp(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(s.objective <= 120.0 + 1e-9);
        // Hand solution: all 60 MW from the cheap unit, costing 120.
        assert!((s.objective - 120.0).abs() < 1e-9);
        let bal = s.values.get("p_0_0").unwrap() + s.values.get("p_1_0").unwrap();
        assert!((bal - 60.0).abs() < 1e-9);
        assert!(check_feasible(&p.relaxed(), &s.values, 1e-6).unwrap().is_feasible());
    }
}
