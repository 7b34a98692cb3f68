//! Dataset generation and the on-disk stages of the neural-diving workflow.
//!
//! Layout under the output directory:
//! `instances/{split}_{k}.uc` and `.lp`, `labels/{split}_{k}.csv`,
//! `graphs/{split}_{k}.bgr`, `model.txt`, `loss.csv`, `eval.csv`, `hist.csv`,
//! `eval_summary.txt`, `baseline_*.csv`, `baseline_summary.txt`,
//! `metrics.csv`, `curves.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baseline::{baseline_evaluate, baseline_train};
use crate::config::PipelineConfig;
use crate::dive::{evaluate_dive_with, EvalCase, EvalStats};
use crate::gcnn::{forward, loss_history_csv, train, GcnnParams, LabeledGraph};
use crate::graph::{encode, BipartiteGraph};
use crate::lp_format::{parse_lp, write_lp};
use crate::metrics::{export_curves, export_report, parse_trial_table, MetricsReport, TrialTable};
use crate::milp::{check_feasible, Assignment};
use crate::solve::{parse_solution_csv, solve_milp, write_solution_csv, BnbStatus};
use crate::uc::{build_milp, UcInstance};

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("missing input {0}: run the earlier stage first")]
    MissingInput(PathBuf),
    #[error("{split} instance {index}: no feasible draw after {attempts} attempts")]
    RedrawsExhausted { split: Split, index: usize, attempts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Test => 2,
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for draw `attempt` of instance `k` in `split`.
pub fn instance_rng(seed: u64, split: Split, k: usize, attempt: usize) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for part in [split.tag(), k as u64, attempt as u64] {
        h = splitmix64(h ^ part);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Scales the whole demand profile by one multiplier and each unit's fuel
/// cost by its own.
pub fn draw_instance(cfg: &PipelineConfig, rng: &mut ChaCha8Rng) -> UcInstance {
    let (dlo, dhi) = cfg.demand_range;
    let (flo, fhi) = cfg.fuel_range;
    let m = rng.gen_range(dlo..=dhi);
    let mut inst = cfg.base.clone();
    for d in &mut inst.demand {
        *d *= m;
    }
    for g in &mut inst.generators {
        g.fuel_cost *= rng.gen_range(flo..=fhi);
    }
    inst
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub name: String,
    pub instance: UcInstance,
    pub solution: Assignment,
    pub objective: f64,
}

pub fn generate_instance(cfg: &PipelineConfig, split: Split, k: usize) -> Result<LabeledInstance> {
    for attempt in 0..=cfg.max_redraws {
        let inst = draw_instance(cfg, &mut instance_rng(cfg.seed, split, k, attempt));
        let p = build_milp(&inst)?;
        let r = solve_milp(&p, &cfg.solver)?;
        if r.status != BnbStatus::Optimal {
            continue;
        }
        let (Some(solution), Some(objective)) = (r.incumbent, r.objective) else {
            continue;
        };
        return Ok(LabeledInstance {
            name: format!("{}_{k:04}", split.name()),
            instance: inst,
            solution,
            objective,
        });
    }
    Err(PipelineError::RedrawsExhausted {
        split,
        index: k,
        attempts: cfg.max_redraws + 1,
    }
    .into())
}

pub fn generate_dataset(cfg: &PipelineConfig, split: Split) -> Result<Vec<LabeledInstance>> {
    let n = match split {
        Split::Train => cfg.train_size,
        Split::Test => cfg.test_size,
    };
    (0..n).map(|k| generate_instance(cfg, split, k)).collect()
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(PipelineError::MissingInput(path.to_path_buf()).into());
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Sorted stems of `dir/{split}_*.{ext}`.
fn stems(dir: &Path, split: Split, ext: &str) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Err(PipelineError::MissingInput(dir.to_path_buf()).into());
    }
    let prefix = format!("{}_", split.name());
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if stem.starts_with(&prefix) {
                out.push(stem.to_string());
            }
        }
    }
    if out.is_empty() {
        return Err(PipelineError::MissingInput(dir.join(format!("{prefix}*.{ext}"))).into());
    }
    out.sort();
    Ok(out)
}

pub fn write_dataset(out: &Path, data: &[LabeledInstance]) -> Result<()> {
    for d in data {
        let p = build_milp(&d.instance)?;
        write(&out.join("instances").join(format!("{}.uc", d.name)), &d.instance.to_kv())?;
        write(&out.join("instances").join(format!("{}.lp", d.name)), &write_lp(&p))?;
        let csv = write_solution_csv(&p, "optimal", Some(d.objective), &d.solution);
        write(&out.join("labels").join(format!("{}.csv", d.name)), &csv)?;
    }
    Ok(())
}

pub fn stage_generate(cfg: &PipelineConfig) -> Result<()> {
    for split in [Split::Train, Split::Test] {
        let data = generate_dataset(cfg, split)?;
        for d in &data {
            let p = build_milp(&d.instance)?;
            if !check_feasible(&p, &d.solution, cfg.solver.feas_tol)?.is_feasible() {
                bail!("{}: label fails its own feasibility check", d.name);
            }
        }
        write_dataset(&cfg.out, &data)?;
    }
    Ok(())
}

pub fn stage_encode(cfg: &PipelineConfig) -> Result<()> {
    let dir = cfg.out.join("instances");
    for split in [Split::Train, Split::Test] {
        for stem in stems(&dir, split, "lp")? {
            let p = parse_lp(&read(&dir.join(format!("{stem}.lp")))?).with_context(|| format!("parsing {stem}.lp"))?;
            write(&cfg.out.join("graphs").join(format!("{stem}.bgr")), &encode(&p).to_text())?;
        }
    }
    Ok(())
}

fn read_label(out: &Path, stem: &str) -> Result<(Assignment, f64)> {
    let f = parse_solution_csv(&read(&out.join("labels").join(format!("{stem}.csv")))?)
        .map_err(|e| anyhow::anyhow!("labels/{stem}.csv: {e}"))?;
    let obj = f.objective.with_context(|| format!("labels/{stem}.csv has no objective"))?;
    Ok((f.values, obj))
}

fn labeled_graph(g: BipartiteGraph, sol: &Assignment, stem: &str) -> Result<LabeledGraph> {
    let labels = g
        .binary_mask
        .iter()
        .map(|&j| {
            let name = &g.var_nodes[j].name;
            sol.get(name).with_context(|| format!("labels/{stem}.csv lacks {name}"))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(LabeledGraph::new(g, labels)?)
}

pub fn stage_train(cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let dir = cfg.out.join("graphs");
    let mut data = Vec::new();
    for stem in stems(&dir, Split::Train, "bgr")? {
        let g = BipartiteGraph::from_text(&read(&dir.join(format!("{stem}.bgr")))?)
            .with_context(|| format!("parsing {stem}.bgr"))?;
        let (sol, _) = read_label(&cfg.out, &stem)?;
        data.push(labeled_graph(g, &sol, &stem)?);
    }
    let res = train(&data, &cfg.train_config())?;
    write(&cfg.out.join("model.txt"), &res.params.to_text())?;
    write(&cfg.out.join("loss.csv"), &loss_history_csv(&res.loss_history))?;
    Ok(res.loss_history)
}

pub fn load_model(out: &Path) -> Result<GcnnParams> {
    let path = out.join("model.txt");
    Ok(GcnnParams::from_text(&read(&path)?).with_context(|| format!("parsing {}", path.display()))?)
}

fn load_cases(out: &Path, split: Split) -> Result<Vec<EvalCase>> {
    let dir = out.join("instances");
    stems(&dir, split, "uc")?
        .into_iter()
        .map(|stem| {
            let instance = UcInstance::from_kv(&read(&dir.join(format!("{stem}.uc")))?)
                .with_context(|| format!("parsing {stem}.uc"))?;
            let (_, opt) = read_label(out, &stem)?;
            Ok(EvalCase {
                name: stem,
                instance,
                optimum: Some(opt),
            })
        })
        .collect()
}

fn write_stats(out: &Path, prefix: &str, stats: &EvalStats) -> Result<()> {
    let (eval, hist, summary) = match prefix {
        "" => ("eval.csv".to_string(), "hist.csv".to_string(), "eval_summary.txt".to_string()),
        p => (format!("{p}_eval.csv"), format!("{p}_hist.csv"), format!("{p}_summary.txt")),
    };
    write(&out.join(eval), &stats.to_csv())?;
    write(&out.join(hist), &stats.histogram_csv())?;
    write(&out.join(summary), &stats.summary())
}

pub fn stage_evaluate(cfg: &PipelineConfig) -> Result<EvalStats> {
    let params = load_model(&cfg.out)?;
    let cases = load_cases(&cfg.out, Split::Test)?;
    let stats = evaluate_dive_with(&cases, cfg.solver.feas_tol, |_, g| Ok(forward(&params, g)?))?;
    write_stats(&cfg.out, "", &stats)?;
    Ok(stats)
}

pub fn stage_baseline(cfg: &PipelineConfig) -> Result<EvalStats> {
    let train_cases = load_cases(&cfg.out, Split::Train)?;
    let mut train_set = Vec::with_capacity(train_cases.len());
    for c in train_cases {
        let (sol, _) = read_label(&cfg.out, &c.name)?;
        train_set.push((c.instance, sol));
    }
    let res = baseline_train(&train_set, &cfg.baseline_config())?;
    write(&cfg.out.join("baseline_loss.csv"), &loss_history_csv(&res.loss_history))?;
    let stats = baseline_evaluate(&res.params, &load_cases(&cfg.out, Split::Test)?, cfg.solver.feas_tol)?;
    write_stats(&cfg.out, "baseline", &stats)?;
    Ok(stats)
}

pub fn stage_metrics(tables: &[PathBuf], out: &Path) -> Result<Vec<MetricsReport>> {
    let parsed = tables
        .iter()
        .map(|p| parse_trial_table(&read(p)?).with_context(|| format!("parsing {}", p.display())))
        .collect::<Result<Vec<TrialTable>>>()?;
    let reports: Vec<MetricsReport> = parsed.iter().map(MetricsReport::compute).collect();
    write(&out.join("metrics.csv"), &export_report(&reports))?;
    write(&out.join("curves.csv"), &export_curves(&parsed))?;
    Ok(reports)
}

pub struct RunReport {
    pub dive: EvalStats,
    pub baseline: EvalStats,
}

/// Every stage in order, all artifacts under `cfg.out`.
pub fn run_all(cfg: &PipelineConfig) -> Result<RunReport> {
    stage_generate(cfg)?;
    stage_encode(cfg)?;
    stage_train(cfg)?;
    let dive = stage_evaluate(cfg)?;
    let baseline = stage_baseline(cfg)?;
    Ok(RunReport { dive, baseline })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(out: &Path) -> PipelineConfig {
        let mut c = PipelineConfig::default();
        c.out = out.to_path_buf();
        c.train_size = 3;
        c.test_size = 2;
        c.train.hidden = 4;
        c.train.layers = 1;
        c.train.epochs = 2;
        c.baseline.hidden = 4;
        c.baseline.epochs = 2;
        c
    }

    #[test]
    fn streams_are_independent_of_order() {
        let c = PipelineConfig::default();
        let a = draw_instance(&c, &mut instance_rng(1, Split::Train, 5, 0));
        let _ = draw_instance(&c, &mut instance_rng(1, Split::Train, 4, 0));
        assert_eq!(a, draw_instance(&c, &mut instance_rng(1, Split::Train, 5, 0)));
        assert_ne!(a, draw_instance(&c, &mut instance_rng(1, Split::Test, 5, 0)));
    }

    #[test]
    fn unit_ranges_reproduce_the_base_case() {
        let mut c = PipelineConfig::default();
        c.demand_range = (1.0, 1.0);
        c.fuel_range = (1.0, 1.0);
        for k in 0..3 {
            assert_eq!(draw_instance(&c, &mut instance_rng(9, Split::Test, k, 0)), c.base);
        }
    }

    #[test]
    fn impossible_draws_name_the_instance() {
        let mut c = PipelineConfig::default();
        c.demand_range = (5.0, 6.0);
        c.max_redraws = 1;
        let err = generate_instance(&c, Split::Test, 3).unwrap_err();
        assert_eq!(
            err.downcast_ref::<PipelineError>(),
            Some(&PipelineError::RedrawsExhausted {
                split: Split::Test,
                index: 3,
                attempts: 2
            })
        );
    }

    #[test]
    fn evaluate_before_train_reports_missing_model() {
        let dir = tempfile::tempdir().unwrap();
        let err = stage_evaluate(&small(dir.path())).unwrap_err();
        assert_eq!(
            err.downcast_ref::<PipelineError>(),
            Some(&PipelineError::MissingInput(dir.path().join("model.txt")))
        );
    }

    #[test]
    fn small_run_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let report = run_all(&cfg).unwrap();
        assert_eq!(report.dive.n, 2);
        for f in ["model.txt", "loss.csv", "eval.csv", "hist.csv", "baseline_eval.csv", "labels/train_0002.csv", "graphs/test_0001.bgr", "instances/test_0000.lp"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(fs::read_to_string(dir.path().join("eval.csv")).unwrap().lines().count(), 3);
    }
}
