//! Success rate, consistency, robustness and iteration-correctness curves
//! over human-judged trial tables. All arithmetic is exact.

use std::fmt::{self, Write as _};

use num_rational::Rational64;
use thiserror::Error;

pub const TRIAL_HEADER: &str = "llm,prompt_type,trial,obj_cor,con_cor,con_com,error_free,decision_verified";
pub const MAX_ITERATIONS: u8 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("iteration count {0} outside 0..=3")]
    Iterations(u8),
    #[error("failed subtask must carry 3 iterations, got {0}")]
    FailureIterations(u8),
    #[error("index {0} outside 1..=3")]
    Index(u8),
    #[error("duplicate record for prompt type {0}, trial {1}")]
    Duplicate(u8, u8),
    #[error("missing record for prompt type {0}, trial {1}")]
    Missing(u8, u8),
    #[error("records name different LLMs: {0} and {1}")]
    MixedLlm(String, String),
    #[error("zeta is defined for 0..=3, got {0}")]
    Zeta(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubtaskOutcome {
    pub success: bool,
    pub iterations: u8,
}

impl SubtaskOutcome {
    pub fn new(success: bool, iterations: u8) -> Result<Self, MetricsError> {
        if iterations > MAX_ITERATIONS {
            return Err(MetricsError::Iterations(iterations));
        }
        if !success && iterations != MAX_ITERATIONS {
            return Err(MetricsError::FailureIterations(iterations));
        }
        Ok(Self { success, iterations })
    }

    pub fn ok(iterations: u8) -> Self {
        Self::new(true, iterations).expect("iterations <= 3")
    }

    pub fn fail() -> Self {
        Self {
            success: false,
            iterations: MAX_ITERATIONS,
        }
    }
}

impl fmt::Display for SubtaskOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", if self.success { 'S' } else { 'F' }, self.iterations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Model,
    Code,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialRecord {
    /// 1 = simple, 2 = intermediate, 3 = sophisticated.
    pub prompt_type: u8,
    pub trial: u8,
    pub obj_cor: SubtaskOutcome,
    pub con_cor: SubtaskOutcome,
    pub con_com: SubtaskOutcome,
    pub error_free: SubtaskOutcome,
    pub decision_verified: SubtaskOutcome,
}

impl TrialRecord {
    pub fn subtasks(&self, task: Task) -> Vec<SubtaskOutcome> {
        match task {
            Task::Model => vec![self.obj_cor, self.con_cor, self.con_com],
            Task::Code => vec![self.error_free, self.decision_verified],
        }
    }

    pub fn task_success(&self, task: Task) -> bool {
        self.subtasks(task).iter().all(|s| s.success)
    }

    /// Corrections needed for the whole task: the largest subtask count.
    pub fn task_iterations(&self, task: Task) -> u8 {
        self.subtasks(task).iter().map(|s| s.iterations).max().unwrap_or(0)
    }
}

/// A complete 3x3 grid of trials for one LLM, stored in (prompt, trial) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialTable {
    pub llm: String,
    records: Vec<TrialRecord>,
}

impl TrialTable {
    pub fn new(llm: impl Into<String>, records: Vec<TrialRecord>) -> Result<Self, MetricsError> {
        let mut grid: [[Option<TrialRecord>; 3]; 3] = [[None; 3]; 3];
        for r in records {
            for idx in [r.prompt_type, r.trial] {
                if !(1..=3).contains(&idx) {
                    return Err(MetricsError::Index(idx));
                }
            }
            let slot = &mut grid[r.prompt_type as usize - 1][r.trial as usize - 1];
            if slot.is_some() {
                return Err(MetricsError::Duplicate(r.prompt_type, r.trial));
            }
            *slot = Some(r);
        }
        let mut sorted = Vec::with_capacity(9);
        for (i, row) in grid.iter().enumerate() {
            for (j, r) in row.iter().enumerate() {
                sorted.push(r.ok_or(MetricsError::Missing(i as u8 + 1, j as u8 + 1))?);
            }
        }
        Ok(Self {
            llm: llm.into(),
            records: sorted,
        })
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    fn prompt(&self, i: u8) -> &[TrialRecord] {
        let start = (i as usize - 1) * 3;
        &self.records[start..start + 3]
    }

    fn successes(&self, task: Task, i: u8) -> u32 {
        self.prompt(i).iter().map(|r| delta(r.task_success(task))).sum()
    }
}

pub fn delta(cond: bool) -> u32 {
    u32::from(cond)
}

pub fn zeta(k: u32) -> Result<u32, MetricsError> {
    match k {
        0 | 3 => Ok(3),
        1 | 2 => Ok(2),
        _ => Err(MetricsError::Zeta(k)),
    }
}

pub fn success_rate(t: &TrialTable, task: Task) -> Rational64 {
    let total: u32 = (1..=3).map(|i| t.successes(task, i)).sum();
    Rational64::new(total.into(), 3)
}

pub fn consistency(t: &TrialTable, task: Task) -> Rational64 {
    let total: u32 = (1..=3).map(|i| zeta(t.successes(task, i)).expect("at most 3 trials")).sum();
    Rational64::new(total.into(), 3)
}

pub fn robustness(t: &TrialTable, task: Task) -> u32 {
    t.successes(task, 1)
}

/// Fraction of trials of prompt type `i` whose task succeeded with at most
/// `k` corrections, for `k = 0, 1, 2, 3`.
pub fn iteration_curve(t: &TrialTable, task: Task, i: u8) -> Result<[Rational64; 4], MetricsError> {
    if !(1..=3).contains(&i) {
        return Err(MetricsError::Index(i));
    }
    let trials = t.prompt(i);
    Ok([0u8, 1, 2, 3].map(|k| {
        let n = trials
            .iter()
            .filter(|r| r.task_success(task) && r.task_iterations(task) <= k)
            .count();
        Rational64::new(n as i64, 3)
    }))
}

fn parse_outcome(cell: &str) -> Result<SubtaskOutcome, String> {
    let (flag, n) = cell.trim().split_once(':').ok_or_else(|| format!("bad outcome `{cell}`"))?;
    let success = match flag {
        "S" => true,
        "F" => false,
        _ => return Err(format!("bad outcome flag `{flag}`")),
    };
    let n: u8 = n.parse().map_err(|_| format!("bad iteration count `{n}`"))?;
    SubtaskOutcome::new(success, n).map_err(|e| e.to_string())
}

pub fn parse_trial_table(text: &str) -> Result<TrialTable, MetricsError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let perr = |line: usize, msg: String| MetricsError::Parse { line: line + 1, msg };
    match lines.next() {
        Some((_, h)) if h.trim() == TRIAL_HEADER => {}
        Some((i, _)) => return Err(perr(i, format!("expected header `{TRIAL_HEADER}`"))),
        None => return Err(perr(0, "empty trial table".into())),
    }
    let mut llm: Option<String> = None;
    let mut records = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(perr(i, format!("expected 8 fields, got {}", f.len())));
        }
        match &llm {
            None => llm = Some(f[0].to_string()),
            Some(name) if name != f[0] => return Err(MetricsError::MixedLlm(name.clone(), f[0].to_string())),
            _ => {}
        }
        let idx = |s: &str| s.parse::<u8>().map_err(|_| perr(i, format!("bad index `{s}`")));
        let o = |s: &str| parse_outcome(s).map_err(|m| perr(i, m));
        records.push(TrialRecord {
            prompt_type: idx(f[1])?,
            trial: idx(f[2])?,
            obj_cor: o(f[3])?,
            con_cor: o(f[4])?,
            con_com: o(f[5])?,
            error_free: o(f[6])?,
            decision_verified: o(f[7])?,
        });
    }
    TrialTable::new(llm.unwrap_or_default(), records)
}

pub fn serialize_trial_table(t: &TrialTable) -> String {
    let mut out = format!("{TRIAL_HEADER}\n");
    for r in &t.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            t.llm, r.prompt_type, r.trial, r.obj_cor, r.con_cor, r.con_com, r.error_free, r.decision_verified
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsReport {
    pub llm: String,
    pub sr_m: Rational64,
    pub sr_c: Rational64,
    pub co_m: Rational64,
    pub co_c: Rational64,
    pub ro_m: u32,
    pub ro_c: u32,
}

impl MetricsReport {
    pub fn compute(t: &TrialTable) -> Self {
        Self {
            llm: t.llm.clone(),
            sr_m: success_rate(t, Task::Model),
            sr_c: success_rate(t, Task::Code),
            co_m: consistency(t, Task::Model),
            co_c: consistency(t, Task::Code),
            ro_m: robustness(t, Task::Model),
            ro_c: robustness(t, Task::Code),
        }
    }
}

/// One row per LLM; rationals print as `7/3` or `2`.
pub fn export_report(reports: &[MetricsReport]) -> String {
    let mut out = String::from("llm,SR_m,SR_c,CO_m,CO_c,RO_m,RO_c\n");
    for r in reports {
        writeln!(out, "{},{},{},{},{},{},{}", r.llm, r.sr_m, r.sr_c, r.co_m, r.co_c, r.ro_m, r.ro_c).unwrap();
    }
    out
}

/// `llm,task,prompt_type,k,fraction` rows for all three prompt types.
pub fn export_curves(tables: &[TrialTable]) -> String {
    let mut out = String::from("llm,task,prompt_type,k,fraction\n");
    for t in tables {
        for (task, label) in [(Task::Model, "model"), (Task::Code, "code")] {
            for i in 1..=3 {
                let curve = iteration_curve(t, task, i).expect("prompt type in range");
                for (k, f) in curve.iter().enumerate() {
                    writeln!(out, "{},{label},{i},{k},{f}", t.llm).unwrap();
                }
            }
        }
    }
    out
}
