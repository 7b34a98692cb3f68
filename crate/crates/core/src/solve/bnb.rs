//! Branch-and-bound over binary variables, fix-and-solve, and exhaustive
//! enumeration.

use std::time::Instant;

use super::simplex::{solve_relaxation, LpStatus, RawLp};
use super::{lp_solution, BnbResult, BnbStatus, LpSolution, SolveError, SolverConfig};
use crate::milp::{Assignment, MilpProblem, RowSense};

pub const BRUTE_FORCE_MAX_BINARIES: usize = 40;
const PRUNE_SLACK: f64 = 1e-9;

struct Node {
    id: usize,
    /// Parent relaxation value, a lower bound for this subtree.
    bound: f64,
    fixes: Vec<(usize, f64)>,
}

fn root_bounds(p: &MilpProblem) -> (Vec<f64>, Vec<f64>) {
    (
        p.vars().iter().map(|v| v.lower).collect(),
        p.vars().iter().map(|v| v.upper).collect(),
    )
}

/// Most fractional binary, lowest index on ties.
fn branching_candidate(x: &[f64], binaries: &[usize], int_tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in binaries {
        let frac = x[j] - x[j].floor();
        let dist = frac.min(1.0 - frac);
        if dist <= int_tol {
            continue;
        }
        if best.map_or(true, |(_, d)| dist > d) {
            best = Some((j, dist));
        }
    }
    best.map(|(j, _)| j)
}

fn snap(x: &mut [f64], binaries: &[usize]) {
    for &j in binaries {
        x[j] = x[j].round();
    }
}

fn check_lp(raw: &RawLp) -> Result<(), SolveError> {
    match raw.status {
        LpStatus::NumericalFailure => Err(SolveError::Numerical),
        LpStatus::Unbounded => Err(SolveError::Unbounded),
        _ => Ok(()),
    }
}

/// Depth-first branch-and-bound that reopens the best-bound open node each
/// time a dive ends.
pub fn solve_milp(p: &MilpProblem, cfg: &SolverConfig) -> Result<BnbResult, SolveError> {
    cfg.validate()?;
    let start = Instant::now();
    let binaries = p.binary_indices();
    let (root_lo, root_hi) = root_bounds(p);
    let mut lo = root_lo.clone();
    let mut hi = root_hi.clone();

    let mut next_id = 1;
    let mut open: Vec<Node> = Vec::new();
    let mut current = Some(Node {
        id: 0,
        bound: f64::NEG_INFINITY,
        fixes: Vec::new(),
    });
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut nodes = 0usize;
    let mut hit_limit = false;

    loop {
        let node = match current.take() {
            Some(n) => n,
            None => {
                let Some(k) = (0..open.len()).min_by(|&a, &b| {
                    open[a]
                        .bound
                        .total_cmp(&open[b].bound)
                        .then(open[a].id.cmp(&open[b].id))
                }) else {
                    break;
                };
                open.swap_remove(k)
            }
        };
        let cutoff = incumbent.as_ref().map_or(f64::INFINITY, |(_, v)| *v - PRUNE_SLACK);
        if node.bound >= cutoff {
            continue;
        }
        if nodes >= cfg.node_limit || cfg.time_limit.is_some_and(|t| start.elapsed() >= t) {
            hit_limit = true;
            break;
        }
        nodes += 1;

        lo.copy_from_slice(&root_lo);
        hi.copy_from_slice(&root_hi);
        for &(j, v) in &node.fixes {
            lo[j] = v;
            hi[j] = v;
        }
        let raw = solve_relaxation(p, &lo, &hi);
        check_lp(&raw)?;
        if raw.status == LpStatus::Infeasible || raw.objective >= cutoff {
            continue;
        }
        match branching_candidate(&raw.x, &binaries, cfg.int_tol) {
            None => {
                let mut x = raw.x;
                snap(&mut x, &binaries);
                let value = p.objective_at(&x);
                incumbent = Some((x, value));
            }
            Some(j) => {
                let up_first = raw.x[j] >= 0.5;
                let mut children = [0.0, 1.0].map(|v| {
                    let mut fixes = node.fixes.clone();
                    fixes.push((j, v));
                    let child = Node {
                        id: next_id,
                        bound: raw.objective,
                        fixes,
                    };
                    next_id += 1;
                    child
                });
                if up_first {
                    children.swap(0, 1);
                }
                let [first, second] = children;
                open.push(second);
                current = Some(first);
            }
        }
    }

    let (status, incumbent, objective) = match (incumbent, hit_limit) {
        (Some((x, v)), false) => (BnbStatus::Optimal, Some(p.assignment_from(&x)), Some(v)),
        (Some((x, v)), true) => (BnbStatus::NodeLimit, Some(p.assignment_from(&x)), Some(v)),
        (None, true) => (BnbStatus::NodeLimit, None, None),
        (None, false) => (BnbStatus::Infeasible, None, None),
    };
    Ok(BnbResult {
        status,
        incumbent,
        objective,
        nodes_explored: nodes,
    })
}

/// Solves the LP left after clamping every binary to its value in `fixing`.
/// All binaries must be fixed.
pub fn solve_fixed(p: &MilpProblem, fixing: &Assignment) -> Result<LpSolution, SolveError> {
    let (mut lo, mut hi) = root_bounds(p);
    for (name, value) in fixing.iter() {
        let j = p
            .var_index(name)
            .ok_or_else(|| SolveError::BadFixing(name.to_string(), "unknown variable".into()))?;
        if !p.vars()[j].is_binary() {
            return Err(SolveError::BadFixing(name.to_string(), "not a binary variable".into()));
        }
        if value != 0.0 && value != 1.0 {
            return Err(SolveError::BadFixing(name.to_string(), format!("value {value} is not 0 or 1")));
        }
        lo[j] = value;
        hi[j] = value;
    }
    let unfixed: Vec<String> = p
        .binary_indices()
        .into_iter()
        .filter(|&j| fixing.get(&p.vars()[j].name).is_none())
        .map(|j| p.vars()[j].name.clone())
        .collect();
    if !unfixed.is_empty() {
        return Err(SolveError::UnfixedBinaries(unfixed));
    }
    let raw = solve_relaxation(p, &lo, &hi);
    if raw.status == LpStatus::NumericalFailure {
        return Err(SolveError::Numerical);
    }
    Ok(lp_solution(p, raw))
}

/// Exhaustive enumeration of the binaries, depth first in index order. A
/// partial pattern is abandoned only when some row cannot be satisfied by any
/// completion within the variable bounds; no objective bounds are used.
/// `nodes_explored` counts the complete patterns whose LP was solved.
pub fn brute_force_milp(p: &MilpProblem) -> Result<BnbResult, SolveError> {
    let binaries = p.binary_indices();
    if binaries.len() > BRUTE_FORCE_MAX_BINARIES {
        return Err(SolveError::TooManyBinaries(binaries.len()));
    }
    let (lo, hi) = root_bounds(p);
    let mut rows_of = vec![Vec::new(); p.num_vars()];
    for (i, c) in p.constraints().iter().enumerate() {
        for &(j, _) in &c.terms {
            rows_of[j].push(i);
        }
    }
    let mut e = Enumeration {
        p,
        binaries: &binaries,
        rows_of,
        lo,
        hi,
        best: None,
        leaves: 0,
    };
    if (0..p.num_constraints()).all(|i| e.row_possible(i)) {
        e.descend(0)?;
    }
    let leaves = e.leaves;
    Ok(match e.best {
        Some((x, v)) => BnbResult {
            status: BnbStatus::Optimal,
            incumbent: Some(p.assignment_from(&x)),
            objective: Some(v),
            nodes_explored: leaves,
        },
        None => BnbResult {
            status: BnbStatus::Infeasible,
            incumbent: None,
            objective: None,
            nodes_explored: leaves,
        },
    })
}

struct Enumeration<'a> {
    p: &'a MilpProblem,
    binaries: &'a [usize],
    rows_of: Vec<Vec<usize>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    best: Option<(Vec<f64>, f64)>,
    leaves: usize,
}

impl Enumeration<'_> {
    fn row_possible(&self, i: usize) -> bool {
        let c = &self.p.constraints()[i];
        let (mut min, mut max) = (0.0, 0.0);
        for &(j, a) in &c.terms {
            let (x, y) = (a * self.lo[j], a * self.hi[j]);
            min += x.min(y);
            max += x.max(y);
        }
        let tol = 1e-9 * (1.0 + c.rhs.abs());
        match c.sense {
            RowSense::Le => min <= c.rhs + tol,
            RowSense::Ge => max >= c.rhs - tol,
            RowSense::Eq => min <= c.rhs + tol && max >= c.rhs - tol,
        }
    }

    fn descend(&mut self, depth: usize) -> Result<(), SolveError> {
        if depth == self.binaries.len() {
            self.leaves += 1;
            let raw = solve_relaxation(self.p, &self.lo, &self.hi);
            check_lp(&raw)?;
            if raw.status == LpStatus::Optimal && self.best.as_ref().map_or(true, |(_, v)| raw.objective < *v) {
                self.best = Some((raw.x, raw.objective));
            }
            return Ok(());
        }
        let j = self.binaries[depth];
        for v in [0.0, 1.0] {
            self.lo[j] = v;
            self.hi[j] = v;
            if self.rows_of[j].iter().all(|&i| self.row_possible(i)) {
                self.descend(depth + 1)?;
            }
        }
        self.lo[j] = 0.0;
        self.hi[j] = 1.0;
        Ok(())
    }
}
