//! Neural diving: predict every binary, fix it, solve the remaining LP, and
//! score the result against the exact optimum.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::gcnn::{forward, GcnnError, GcnnParams};
use crate::graph::{encode, BipartiteGraph};
use crate::milp::{check_feasible, Assignment, MilpProblem, ModelError};
use crate::solve::{solve_fixed, solve_milp, BnbStatus, LpSolution, LpStatus, SolveError, SolverConfig};
use crate::uc::{build_milp, UcInstance};

pub const HIST_BIN_WIDTH: f64 = 0.01;
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum DiveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Gcnn(#[from] GcnnError),
    #[error("relative error undefined for a zero optimum")]
    ZeroOptimum,
    #[error("R^2 needs equal, nonempty inputs ({0} vs {1})")]
    Lengths(usize, usize),
    #[error("R^2 undefined: observed values have zero variance")]
    ZeroVariance,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("{0}")]
    Shape(String),
}

/// Signed relative cost error `(cost - opt) / |opt|`.
pub fn rel_error(cost: f64, opt: f64) -> Result<f64, DiveError> {
    if opt == 0.0 {
        return Err(DiveError::ZeroOptimum);
    }
    Ok((cost - opt) / opt.abs())
}

/// Coefficient of determination `1 - SS_res / SS_tot`; unbounded below.
pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<f64, DiveError> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(DiveError::Lengths(y.len(), yhat.len()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(DiveError::ZeroVariance);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiveOutcome {
    pub fixed: Assignment,
    pub lp: LpSolution,
    pub feasible: bool,
    pub cost: Option<f64>,
    pub rel_error: Option<f64>,
}

/// Rounds probabilities at 0.5 (ties go to 1) into a fixing of every binary.
pub fn threshold_fixing(p: &MilpProblem, mask: &[usize], probs: &[f64]) -> Assignment {
    mask.iter()
        .zip(probs)
        .map(|(&j, &pr)| (p.vars()[j].name.clone(), if pr >= THRESHOLD { 1.0 } else { 0.0 }))
        .collect()
}

/// Fixes binaries from `probs` (ordered like the graph's binary mask) and
/// solves the resulting LP. `optimum` is the exact MILP value, if known.
pub fn dive_with_probs(
    p: &MilpProblem,
    mask: &[usize],
    probs: &[f64],
    optimum: Option<f64>,
    feas_tol: f64,
) -> Result<DiveOutcome, DiveError> {
    if mask.len() != probs.len() {
        return Err(DiveError::Shape(format!("{} probabilities for {} binaries", probs.len(), mask.len())));
    }
    let fixed = threshold_fixing(p, mask, probs);
    let lp = solve_fixed(p, &fixed)?;
    let feasible = lp.status == LpStatus::Optimal && check_feasible(p, &lp.values, feas_tol)?.is_feasible();
    let cost = feasible.then_some(lp.objective);
    let rel = match (cost, optimum) {
        (Some(c), Some(o)) => Some(rel_error(c, o)?),
        _ => None,
    };
    Ok(DiveOutcome {
        fixed,
        lp,
        feasible,
        cost,
        rel_error: rel,
    })
}

/// Predict with the GCNN, fix, solve, and compare with the exact optimum.
pub fn dive(params: &GcnnParams, inst: &UcInstance) -> Result<DiveOutcome, DiveError> {
    let p = build_milp(inst)?;
    let g = encode(&p);
    let probs = forward(params, &g)?;
    let cfg = SolverConfig::default();
    let opt = solve_milp(&p, &cfg)?;
    let optimum = (opt.status == BnbStatus::Optimal).then_some(opt.objective).flatten();
    dive_with_probs(&p, &g.binary_mask, &probs, optimum, cfg.feas_tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub feasible: usize,
    pub infeasible: usize,
}

/// Per-instance evaluation record.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub instance: String,
    pub feasible: bool,
    pub opt_cost: f64,
    pub pred_cost: Option<f64>,
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum R2Population {
    /// Dive evaluator: only feasible dives have a cost.
    Feasible,
    /// Baseline evaluator: every prediction has a cost.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub n: usize,
    pub feasible_count: usize,
    pub feasible_rate: f64,
    /// Relative errors of the feasible cases.
    pub rel_errors: Vec<f64>,
    /// Non-empty bins only, in ascending order.
    pub histogram: Vec<HistBin>,
    pub r2: Option<f64>,
    pub r2_population: R2Population,
    pub mean_abs_rel_error: f64,
    /// Test instances dropped because the exact solver found no optimum.
    pub excluded: usize,
    pub records: Vec<EvalRecord>,
}

fn bin_of(rel: f64) -> i64 {
    // Tiny negative errors from LP round-off land in the [0, 0.01) bin.
    (rel / HIST_BIN_WIDTH + 1e-9).floor() as i64
}

impl EvalStats {
    /// Aggregates per-instance records. Records with a relative error enter the
    /// histogram; `population` selects which records feed R^2.
    pub fn from_records(records: Vec<EvalRecord>, excluded: usize, population: R2Population) -> Self {
        let n = records.len();
        let feasible_count = records.iter().filter(|r| r.feasible).count();
        let rel_errors: Vec<f64> = records.iter().filter(|r| r.feasible).filter_map(|r| r.rel_error).collect();
        let mut bins: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
        for r in &records {
            if let Some(e) = r.rel_error {
                let slot = bins.entry(bin_of(e)).or_default();
                if r.feasible {
                    slot.0 += 1;
                } else {
                    slot.1 += 1;
                }
            }
        }
        let histogram = bins
            .into_iter()
            .map(|(k, (f, i))| HistBin {
                lo: k as f64 * HIST_BIN_WIDTH,
                hi: (k + 1) as f64 * HIST_BIN_WIDTH,
                feasible: f,
                infeasible: i,
            })
            .collect();
        let pairs: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| population == R2Population::All || r.feasible)
            .filter_map(|r| r.pred_cost.map(|c| (r.opt_cost, c)))
            .collect();
        let (y, yhat): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r2 = r_squared(&y, &yhat).ok();
        let mean_abs_rel_error = if rel_errors.is_empty() {
            0.0
        } else {
            rel_errors.iter().map(|e| e.abs()).sum::<f64>() / rel_errors.len() as f64
        };
        Self {
            n,
            feasible_count,
            feasible_rate: if n == 0 { 0.0 } else { feasible_count as f64 / n as f64 },
            rel_errors,
            histogram,
            r2,
            r2_population: population,
            mean_abs_rel_error,
            excluded,
            records,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("instance,feasible,opt_cost,pred_cost,rel_error\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for r in &self.records {
            writeln!(
                out,
                "{},{},{:?},{},{}",
                r.instance,
                u8::from(r.feasible),
                r.opt_cost,
                opt(r.pred_cost),
                opt(r.rel_error)
            )
            .unwrap();
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,feasible_count,infeasible_count\n");
        for b in &self.histogram {
            writeln!(out, "{:.2},{:.2},{},{}", b.lo, b.hi, b.feasible, b.infeasible).unwrap();
        }
        out
    }

    pub fn summary(&self) -> String {
        let r2 = self.r2.map_or("undefined".to_string(), |v| format!("{v:.6}"));
        let population = match self.r2_population {
            R2Population::Feasible => "feasible",
            R2Population::All => "all",
        };
        format!(
            "n = {}\nfeasible = {}\nfeasible_rate = {:.4}\nmean_abs_rel_error = {:.6}\nr2 = {r2}\nr2_population = {population}\nexcluded = {}\n",
            self.n, self.feasible_count, self.feasible_rate, self.mean_abs_rel_error, self.excluded
        )
    }
}

/// One test case with its exact optimum (absent when the oracle failed).
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub name: String,
    pub instance: UcInstance,
    pub optimum: Option<f64>,
}

/// Dive evaluation with an arbitrary predictor `predict(case_index, graph)`.
pub fn evaluate_dive_with<F>(cases: &[EvalCase], feas_tol: f64, mut predict: F) -> Result<EvalStats, DiveError>
where
    F: FnMut(usize, &BipartiteGraph) -> Result<Vec<f64>, DiveError>,
{
    if cases.is_empty() {
        return Err(DiveError::EmptyTestSet);
    }
    let mut records = Vec::with_capacity(cases.len());
    let mut excluded = 0;
    for (k, case) in cases.iter().enumerate() {
        let Some(opt) = case.optimum else {
            excluded += 1;
            continue;
        };
        let p = build_milp(&case.instance)?;
        let g = encode(&p);
        let probs = predict(k, &g)?;
        let out = dive_with_probs(&p, &g.binary_mask, &probs, Some(opt), feas_tol)?;
        records.push(EvalRecord {
            instance: case.name.clone(),
            feasible: out.feasible,
            opt_cost: opt,
            pred_cost: out.cost,
            rel_error: out.rel_error,
        });
    }
    Ok(EvalStats::from_records(records, excluded, R2Population::Feasible))
}

/// Solves each test instance exactly, then dives with the trained GCNN.
pub fn evaluate_dive(params: &GcnnParams, test: &[UcInstance]) -> Result<EvalStats, DiveError> {
    let cfg = SolverConfig::default();
    let cases = oracle_cases(test, &cfg)?;
    evaluate_dive_with(&cases, cfg.feas_tol, |_, g| Ok(forward(params, g)?))
}

pub fn oracle_cases(test: &[UcInstance], cfg: &SolverConfig) -> Result<Vec<EvalCase>, DiveError> {
    test.iter()
        .enumerate()
        .map(|(k, inst)| {
            let r = solve_milp(&build_milp(inst)?, cfg)?;
            Ok(EvalCase {
                name: format!("{k:05}"),
                instance: inst.clone(),
                optimum: if r.status == BnbStatus::Optimal { r.objective } else { None },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uc::GeneratorSpec;

    fn two_unit(demand: f64) -> UcInstance {
        UcInstance::new(
            vec![GeneratorSpec::simple(0, 10.0, 100.0, 2.0), GeneratorSpec::simple(1, 10.0, 50.0, 5.0)],
            vec![demand],
            None,
        )
        .unwrap()
    }

    fn optimal_probs(inst: &UcInstance) -> (f64, Vec<f64>) {
        let p = build_milp(inst).unwrap();
        let r = solve_milp(&p, &SolverConfig::default()).unwrap();
        let inc = r.incumbent.unwrap();
        let probs = p.binary_indices().iter().map(|&j| inc.get(&p.vars()[j].name).unwrap()).collect();
        (r.objective.unwrap(), probs)
    }

    #[test]
    fn rel_error_values() {
        assert_eq!(rel_error(120.0, 120.0).unwrap(), 0.0);
        assert_eq!(rel_error(150.0, 120.0).unwrap(), 0.25);
        assert_eq!(rel_error(5.0, 0.0).unwrap_err(), DiveError::ZeroOptimum);
        assert_eq!(rel_error(-90.0, -100.0).unwrap(), 0.1);
    }

    #[test]
    fn r_squared_values() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        // SS_res = 4 + 0 + 4, SS_tot = 1 + 0 + 1
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -3.0);
        assert_eq!(r_squared(&[2.0, 2.0], &[1.0, 3.0]).unwrap_err(), DiveError::ZeroVariance);
        assert!(matches!(r_squared(&[], &[]), Err(DiveError::Lengths(0, 0))));
    }

    #[test]
    fn identity_dive_has_zero_error() {
        let inst = two_unit(60.0);
        let (opt, probs) = optimal_probs(&inst);
        let p = build_milp(&inst).unwrap();
        let out = dive_with_probs(&p, &p.binary_indices(), &probs, Some(opt), 1e-6).unwrap();
        assert!(out.feasible);
        assert_eq!(out.rel_error, Some(0.0));
    }

    #[test]
    fn all_off_dive_is_infeasible() {
        let p = build_milp(&two_unit(60.0)).unwrap();
        let mask = p.binary_indices();
        let out = dive_with_probs(&p, &mask, &vec![0.1; mask.len()], Some(120.0), 1e-6).unwrap();
        assert!(!out.feasible);
        assert_eq!(out.cost, None);
        assert_eq!(out.lp.status, LpStatus::Infeasible);
    }

    #[test]
    fn forced_on_dive_is_suboptimal() {
        let p = build_milp(&two_unit(60.0)).unwrap();
        let mask = p.binary_indices();
        // Order per unit: u, su, sd. Both units on and started, ties at 0.5 go to 1.
        let probs = [0.9, 0.5, 0.2, 0.7, 0.6, 0.0];
        let out = dive_with_probs(&p, &mask, &probs, Some(120.0), 1e-6).unwrap();
        assert!(out.feasible);
        assert!((out.cost.unwrap() - 150.0).abs() < 1e-9);
        assert!((out.rel_error.unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn gcnn_dive_end_to_end() {
        let params = crate::gcnn::GcnnParams::zeros(4, 1);
        // All probabilities are 0.5, so every binary is fixed to 1: both units
        // on, started, and simultaneously shut down, which breaks the logic row.
        let out = dive(&params, &two_unit(60.0)).unwrap();
        assert!(!out.feasible);
        assert!(out.fixed.iter().all(|(_, v)| v == 1.0));
    }

    fn cases(demands: &[f64]) -> Vec<EvalCase> {
        oracle_cases(&demands.iter().map(|&d| two_unit(d)).collect::<Vec<_>>(), &SolverConfig::default()).unwrap()
    }

    #[test]
    fn perfect_predictor_stats() {
        let demands = [40.0, 60.0, 90.0, 120.0];
        let labels: Vec<Vec<f64>> = demands.iter().map(|&d| optimal_probs(&two_unit(d)).1).collect();
        let stats = evaluate_dive_with(&cases(&demands), 1e-6, |k, _| Ok(labels[k].clone())).unwrap();
        assert_eq!(stats.feasible_rate, 1.0);
        assert_eq!(stats.r2, Some(1.0));
        assert_eq!(stats.mean_abs_rel_error, 0.0);
    }

    #[test]
    fn all_off_predictor_stats() {
        let stats = evaluate_dive_with(&cases(&[40.0, 60.0]), 1e-6, |_, g| Ok(vec![0.0; g.binary_mask.len()])).unwrap();
        assert_eq!(stats.feasible_rate, 0.0);
        assert_eq!(stats.r2, None);
        assert!(stats.histogram.is_empty());
        assert!(stats.summary().contains("r2 = undefined"));
    }

    #[test]
    fn mixed_set_histogram_counts() {
        // Demands and the dive each predictor variant produces:
        //   40  optimal (unit 0 only)             -> feasible, error 0
        //   60  both units forced on: 150 vs 120  -> feasible, error 0.25
        //   90  all off                           -> infeasible
        //  120  optimal (both units)              -> feasible, error 0
        //  140  both on: optimal already          -> feasible, error 0
        let demands = [40.0, 60.0, 90.0, 120.0, 140.0];
        let both_on = vec![1.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let preds: Vec<Vec<f64>> = vec![
            optimal_probs(&two_unit(40.0)).1,
            both_on.clone(),
            vec![0.0; 6],
            optimal_probs(&two_unit(120.0)).1,
            both_on,
        ];
        let stats = evaluate_dive_with(&cases(&demands), 1e-6, |k, _| Ok(preds[k].clone())).unwrap();
        assert_eq!(stats.n, 5);
        assert_eq!(stats.feasible_count, 4);
        let total: usize = stats.histogram.iter().map(|b| b.feasible + b.infeasible).sum();
        assert_eq!(total, 4);
        assert_eq!(stats.histogram.len(), 2);
        assert_eq!((stats.histogram[0].lo, stats.histogram[0].feasible), (0.0, 3));
        assert_eq!((stats.histogram[1].lo, stats.histogram[1].feasible), (0.25, 1));
        assert_eq!(stats.to_csv().lines().count(), 6);
    }

    #[test]
    fn oracle_infeasible_cases_are_excluded() {
        let mut cs = cases(&[60.0]);
        cs.push(EvalCase {
            name: "short".into(),
            instance: two_unit(500.0),
            optimum: None,
        });
        let stats = evaluate_dive_with(&cs, 1e-6, |_, g| Ok(vec![1.0; g.binary_mask.len()])).unwrap();
        assert_eq!(stats.n, 1);
        assert_eq!(stats.excluded, 1);
    }

    #[test]
    fn empty_test_set_rejected() {
        let params = crate::gcnn::GcnnParams::zeros(2, 1);
        assert_eq!(evaluate_dive(&params, &[]).unwrap_err(), DiveError::EmptyTestSet);
    }
}
