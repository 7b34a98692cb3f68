use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use uclab::config::PipelineConfig;
use uclab::dive::{dive_with_probs, EvalStats};
use uclab::gcnn::forward;
use uclab::graph::encode;
use uclab::lp_format::parse_lp;
use uclab::pipeline::{self, load_model};
use uclab::solve::{solve_milp, write_solution_csv, BnbStatus};
use uclab::uc::{build_milp, UcInstance};

#[derive(Parser)]
#[command(name = "uclab", about = "Unit-commitment MILP lab with neural diving")]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw train and test instances and label them with exact optima.
    Generate,
    /// Solve one LP-format file to optimality and print the solution CSV.
    Solve {
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Encode every generated instance as a bipartite graph.
    Encode,
    /// Train the GCNN on the encoded training split.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Dive on one instance file with the trained model.
    Dive { instance: PathBuf },
    /// Dive on the whole test split and write eval.csv and hist.csv.
    Evaluate,
    /// Train and evaluate the direct-prediction MLP baseline.
    Baseline,
    /// Success rate, consistency and robustness of trial tables.
    Metrics {
        #[arg(required = true)]
        tables: Vec<PathBuf>,
    },
    /// All pipeline stages in order.
    Run,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            PipelineConfig::from_kv(&text, path.parent().unwrap_or(Path::new(".")))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn print_stats(label: &str, s: &EvalStats) {
    println!("[{label}]");
    print!("{}", s.summary());
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.cmd {
        Cmd::Generate => pipeline::stage_generate(&cfg)?,
        Cmd::Solve { input, output } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let p = parse_lp(&text).with_context(|| format!("parsing {}", input.display()))?;
            let r = solve_milp(&p, &cfg.solver)?;
            let status = match r.status {
                BnbStatus::Optimal => "optimal",
                BnbStatus::Infeasible => "infeasible",
                BnbStatus::NodeLimit => "node_limit",
            };
            let csv = match &r.incumbent {
                Some(a) => write_solution_csv(&p, status, r.objective, a),
                None => format!("# status={status}\nvariable,value\n"),
            };
            match output {
                Some(path) => std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
        }
        Cmd::Encode => pipeline::stage_encode(&cfg)?,
        Cmd::Train { epochs, learning_rate } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = lr;
            }
            let history = pipeline::stage_train(&cfg)?;
            println!("final mean loss {:.6}", history.last().copied().unwrap_or(f64::NAN));
        }
        Cmd::Dive { instance } => {
            let params = load_model(&cfg.out)?;
            let text = std::fs::read_to_string(&instance).with_context(|| format!("reading {}", instance.display()))?;
            let inst = UcInstance::from_kv(&text)?;
            let p = build_milp(&inst)?;
            let g = encode(&p);
            let probs = forward(&params, &g)?;
            let r = solve_milp(&p, &cfg.solver)?;
            let out = dive_with_probs(&p, &g.binary_mask, &probs, r.objective, cfg.solver.feas_tol)?;
            println!("feasible = {}", out.feasible);
            if let Some(c) = out.cost {
                println!("cost = {c}");
            }
            if let Some(o) = r.objective {
                println!("optimum = {o}");
            }
            if let Some(e) = out.rel_error {
                println!("rel_error = {e}");
            }
        }
        Cmd::Evaluate => print_stats("dive", &pipeline::stage_evaluate(&cfg)?),
        Cmd::Baseline => print_stats("baseline", &pipeline::stage_baseline(&cfg)?),
        Cmd::Metrics { tables } => {
            let reports = pipeline::stage_metrics(&tables, &cfg.out)?;
            print!("{}", uclab::metrics::export_report(&reports));
        }
        Cmd::Run => {
            let r = pipeline::run_all(&cfg)?;
            print_stats("dive", &r.dive);
            print_stats("baseline", &r.baseline);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
