//! Dense-tableau primal simplex with bounded variables.
//!
//! Phase 1 minimizes the sum of artificial variables; phase 2 the true
//! objective. Pricing is Dantzig's largest reduced cost until a run of
//! degenerate pivots is seen, after which Bland's smallest-index rule takes
//! over until the objective moves again.

use crate::milp::{MilpProblem, RowSense};

const PIVOT_TOL: f64 = 1e-9;
const PRICE_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-13;
const DEGENERATE_RUN: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Pivot breakdown, iteration cap, or a final solution that fails its own
    /// residual check.
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub(crate) struct RawLp {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl RawLp {
    fn status_only(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective: f64::NAN,
            iterations,
        }
    }
}

/// Internal column: either a structural variable image `sign * col` or a
/// slack/artificial.
#[derive(Clone, Copy)]
struct ColMap {
    var: usize,
    sign: f64,
}

struct Tableau {
    m: usize,
    n: usize,
    a: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    at_upper: Vec<bool>,
    excluded: Vec<bool>,
    xb: Vec<f64>,
    d: Vec<f64>,
    iterations: usize,
    limit: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
    Failed,
}

impl Tableau {
    fn nonbasic_value(&self, k: usize) -> f64 {
        if self.at_upper[k] {
            self.hi[k]
        } else {
            self.lo[k]
        }
    }

    fn price(&self, bland: bool) -> Option<usize> {
        let mut best = None;
        let mut best_score = PRICE_TOL;
        for k in 0..self.n {
            if self.in_basis[k] || self.excluded[k] || self.hi[k] <= self.lo[k] {
                continue;
            }
            let dk = self.d[k];
            let score = if self.at_upper[k] { dk } else { -dk };
            if score > PRICE_TOL {
                if bland {
                    return Some(k);
                }
                if score > best_score {
                    best_score = score;
                    best = Some(k);
                }
            }
        }
        best
    }

    fn reduced_costs(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.a[i * self.n..(i + 1) * self.n];
            for (dk, &t) in self.d.iter_mut().zip(row) {
                *dk -= cb * t;
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let n = self.n;
        let piv = self.a[r * n + j];
        let mut prow: Vec<(usize, f64)> = Vec::with_capacity(n / 4);
        {
            let row = &mut self.a[r * n..(r + 1) * n];
            for (k, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v /= piv;
                    if v.abs() < DROP_TOL {
                        *v = 0.0;
                    } else {
                        prow.push((k, *v));
                    }
                }
            }
            row[j] = 1.0;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let row = &mut self.a[i * n..(i + 1) * n];
            let f = row[j];
            if f == 0.0 {
                continue;
            }
            for &(k, v) in &prow {
                let nv = row[k] - f * v;
                row[k] = if nv.abs() < DROP_TOL { 0.0 } else { nv };
            }
            row[j] = 0.0;
        }
        let dj = self.d[j];
        if dj != 0.0 {
            for &(k, v) in &prow {
                self.d[k] -= dj * v;
            }
            self.d[j] = 0.0;
        }
        let leaving = self.basis[r];
        self.in_basis[leaving] = false;
        self.in_basis[j] = true;
        self.basis[r] = j;
    }

    fn run_phase(&mut self) -> PhaseEnd {
        let mut bland = false;
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= self.limit {
                return PhaseEnd::Failed;
            }
            let Some(j) = self.price(bland) else {
                return PhaseEnd::Optimal;
            };
            self.iterations += 1;
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };
            let mut theta = self.hi[j] - self.lo[j];
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let alpha = dir * self.a[i * self.n + j];
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let lim = if alpha > 0.0 {
                    (self.xb[i] - self.lo[b]) / alpha
                } else {
                    if self.hi[b] == f64::INFINITY {
                        continue;
                    }
                    (self.hi[b] - self.xb[i]) / -alpha
                };
                let lim = lim.max(0.0);
                let better = match leave {
                    None => lim < theta,
                    Some((r, ar)) => {
                        if lim < theta - 1e-12 {
                            true
                        } else if lim <= theta + 1e-12 {
                            if bland {
                                b < self.basis[r]
                            } else {
                                alpha.abs() > ar.abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    theta = lim;
                    leave = Some((i, alpha));
                }
            }
            if theta == f64::INFINITY {
                return PhaseEnd::Unbounded;
            }
            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
            let step = theta * dir;
            let entering_value = self.nonbasic_value(j) + step;
            if step != 0.0 {
                for i in 0..self.m {
                    let t = self.a[i * self.n + j];
                    if t != 0.0 {
                        self.xb[i] -= t * step;
                    }
                }
            }
            match leave {
                None => self.at_upper[j] = !self.at_upper[j],
                Some((r, alpha)) => {
                    if self.a[r * self.n + j].abs() < 1e-11 {
                        return PhaseEnd::Failed;
                    }
                    let leaving = self.basis[r];
                    self.at_upper[leaving] = alpha < 0.0;
                    self.pivot(r, j);
                    self.xb[r] = entering_value;
                    self.at_upper[j] = false;
                }
            }
        }
    }
}

/// Solves the LP relaxation of `p` with the given per-variable bounds.
pub(crate) fn solve_relaxation(p: &MilpProblem, lower: &[f64], upper: &[f64]) -> RawLp {
    let nv = p.num_vars();
    let cost = p.cost_vector();
    let mut fixed: Vec<Option<f64>> = vec![None; nv];
    let mut cols: Vec<ColMap> = Vec::with_capacity(nv);
    let mut col_lo = Vec::with_capacity(nv);
    let mut col_hi = Vec::with_capacity(nv);
    let mut col_of: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for j in 0..nv {
        let (l, u) = (lower[j], upper[j]);
        if l > u + 1e-9 {
            return RawLp::status_only(LpStatus::Infeasible, 0);
        }
        if u - l <= 1e-12 {
            fixed[j] = Some(l);
            continue;
        }
        let mut push = |sign: f64, lo: f64, hi: f64| {
            col_of[j].push(cols.len());
            cols.push(ColMap { var: j, sign });
            col_lo.push(lo);
            col_hi.push(hi);
        };
        match (l.is_finite(), u.is_finite()) {
            (true, _) => push(1.0, l, u),
            (false, true) => push(-1.0, -u, f64::INFINITY),
            (false, false) => {
                push(1.0, 0.0, f64::INFINITY);
                push(-1.0, 0.0, f64::INFINITY);
            }
        }
    }

    // Rows over the remaining columns, with fixed variables folded into rhs.
    struct Row {
        terms: Vec<(usize, f64)>,
        sense: RowSense,
        rhs: f64,
    }
    let mut rows: Vec<Row> = Vec::with_capacity(p.num_constraints());
    for c in p.constraints() {
        let mut rhs = c.rhs;
        let mut terms = Vec::with_capacity(c.terms.len());
        for &(j, a) in &c.terms {
            if let Some(v) = fixed[j] {
                rhs -= a * v;
            } else {
                for &k in &col_of[j] {
                    terms.push((k, a * cols[k].sign));
                }
            }
        }
        if terms.is_empty() {
            let tol = 1e-9 * (1.0 + c.rhs.abs());
            let ok = match c.sense {
                RowSense::Le => 0.0 <= rhs + tol,
                RowSense::Ge => 0.0 >= rhs - tol,
                RowSense::Eq => rhs.abs() <= tol,
            };
            if !ok {
                return RawLp::status_only(LpStatus::Infeasible, 0);
            }
            continue;
        }
        rows.push(Row {
            terms,
            sense: c.sense,
            rhs,
        });
    }

    let m = rows.len();
    let ns = cols.len();
    let n_slack = rows.iter().filter(|r| r.sense != RowSense::Eq).count();
    // Residuals with every structural column at its lower bound decide
    // which rows need an artificial.
    let resid: Vec<f64> = rows
        .iter()
        .map(|r| r.rhs - r.terms.iter().map(|&(k, a)| a * col_lo[k]).sum::<f64>())
        .collect();
    let n_art = rows
        .iter()
        .zip(&resid)
        .filter(|(r, &res)| match r.sense {
            RowSense::Le => res < 0.0,
            RowSense::Ge => res > 0.0,
            RowSense::Eq => true,
        })
        .count();
    let n = ns + n_slack + n_art;

    let mut t = Tableau {
        m,
        n,
        a: vec![0.0; m * n],
        lo: col_lo,
        hi: col_hi,
        basis: vec![0; m],
        in_basis: vec![false; n],
        at_upper: vec![false; n],
        excluded: vec![false; n],
        xb: vec![0.0; m],
        d: vec![0.0; n],
        iterations: 0,
        limit: 50 * (m + n) + 1000,
    };
    t.lo.resize(n, 0.0);
    t.hi.resize(n, f64::INFINITY);
    let mut slack = ns;
    let mut art = ns + n_slack;
    let first_art = art;
    for (i, row) in rows.iter().enumerate() {
        let res = resid[i];
        let (scale, basic) = match row.sense {
            RowSense::Le if res >= 0.0 => (1.0, slack),
            RowSense::Ge if res <= 0.0 => (-1.0, slack),
            _ => (if res < 0.0 { -1.0 } else { 1.0 }, art),
        };
        let r = &mut t.a[i * n..(i + 1) * n];
        for &(k, a) in &row.terms {
            r[k] = scale * a;
        }
        match row.sense {
            RowSense::Le => r[slack] = scale,
            RowSense::Ge => r[slack] = -scale,
            RowSense::Eq => {}
        }
        if row.sense != RowSense::Eq {
            slack += 1;
        }
        if basic >= first_art {
            r[art] = 1.0;
            art += 1;
        }
        t.basis[i] = basic;
        t.in_basis[basic] = true;
        t.xb[i] = scale * res;
    }

    if n_art > 0 {
        let mut phase1 = vec![0.0; n];
        phase1[first_art..].iter_mut().for_each(|c| *c = 1.0);
        t.reduced_costs(&phase1);
        match t.run_phase() {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded | PhaseEnd::Failed => {
                return RawLp::status_only(LpStatus::NumericalFailure, t.iterations)
            }
        }
        let infeas: f64 = (0..m).filter(|&i| t.basis[i] >= first_art).map(|i| t.xb[i]).sum();
        let scale = 1.0 + rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if infeas > 1e-7 * scale {
            return RawLp::status_only(LpStatus::Infeasible, t.iterations);
        }
        for k in first_art..n {
            t.excluded[k] = true;
            t.hi[k] = 0.0;
        }
        for r in 0..m {
            if t.basis[r] < first_art {
                continue;
            }
            let row = &t.a[r * n..(r + 1) * n];
            let mut best: Option<(usize, f64)> = None;
            for (k, &v) in row.iter().enumerate().take(first_art) {
                if !t.in_basis[k] && v.abs() > 1e-7 && best.map_or(true, |(_, bv)| v.abs() > bv) {
                    best = Some((k, v.abs()));
                }
            }
            // No candidate means the row is redundant; its artificial stays
            // basic at zero and can never move.
            if let Some((k, _)) = best {
                let value = t.nonbasic_value(k);
                t.at_upper[t.basis[r]] = false;
                t.pivot(r, k);
                t.xb[r] = value;
                t.at_upper[k] = false;
            }
        }
    }

    let mut phase2 = vec![0.0; n];
    for (k, c) in cols.iter().enumerate() {
        phase2[k] = cost[c.var] * c.sign;
    }
    t.reduced_costs(&phase2);
    let status = match t.run_phase() {
        PhaseEnd::Optimal => LpStatus::Optimal,
        PhaseEnd::Unbounded => return RawLp::status_only(LpStatus::Unbounded, t.iterations),
        PhaseEnd::Failed => return RawLp::status_only(LpStatus::NumericalFailure, t.iterations),
    };

    let mut colval = vec![0.0; n];
    for k in 0..n {
        if !t.in_basis[k] {
            colval[k] = t.nonbasic_value(k);
        }
    }
    for i in 0..m {
        colval[t.basis[i]] = t.xb[i];
    }
    let mut x: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    for (k, c) in cols.iter().enumerate() {
        let v = colval[k].clamp(t.lo[k], t.hi[k]);
        x[c.var] += c.sign * v;
    }

    // Residual check against the original rows.
    for c in p.constraints() {
        if c.violation(&x) > 1e-6 * (1.0 + c.rhs.abs()) {
            return RawLp::status_only(LpStatus::NumericalFailure, t.iterations);
        }
    }
    RawLp {
        status,
        objective: p.objective_at(&x),
        x,
        iterations: t.iterations,
    }
}
