//! Pipeline configuration, read from a flat `key = value` file.
//!
//! | key | default |
//! |---|---|
//! | `seed` | 0 |
//! | `out` | `out` |
//! | `base_instance` | built-in 5-unit, 12-period fleet |
//! | `train_size` / `test_size` | 200 / 100 |
//! | `demand_lo` / `demand_hi` | 0.8 / 1.2 |
//! | `fuel_lo` / `fuel_hi` | 0.8 / 1.2 |
//! | `max_redraws` | 20 |
//! | `hidden` / `layers` / `epochs` / `learning_rate` | 32 / 6 / 150 / 5e-4 |
//! | `feas_tol` | 1e-6 |
//! | `node_limit` | 1000000 |
//! | `baseline_hidden` / `baseline_epochs` / `baseline_learning_rate` | 64 / 200 / 1e-3 |
//!
//! `base_instance` names an instance file, resolved relative to the config file.

use std::path::{Path, PathBuf};

use crate::baseline::BaselineConfig;
use crate::gcnn::TrainConfig;
use crate::kv::{KvError, KvMap};
use crate::solve::SolverConfig;
use crate::uc::{GeneratorSpec, UcInstance};

const KEYS: &[&str] = &[
    "seed",
    "out",
    "base_instance",
    "train_size",
    "test_size",
    "demand_lo",
    "demand_hi",
    "fuel_lo",
    "fuel_hi",
    "max_redraws",
    "hidden",
    "layers",
    "epochs",
    "learning_rate",
    "feas_tol",
    "node_limit",
    "baseline_hidden",
    "baseline_epochs",
    "baseline_learning_rate",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub base: UcInstance,
    pub train_size: usize,
    pub test_size: usize,
    pub demand_range: (f64, f64),
    pub fuel_range: (f64, f64),
    pub max_redraws: usize,
    pub train: TrainConfig,
    pub solver: SolverConfig,
    pub baseline: BaselineConfig,
}

fn unit(id: usize, p: (f64, f64), fuel: f64, no_load: f64, startup: f64, min_updown: usize, init: Option<f64>) -> GeneratorSpec {
    let mut g = GeneratorSpec::simple(id, p.0, p.1, fuel);
    g.no_load_cost = no_load;
    g.startup_cost = startup;
    g.min_up = min_updown;
    g.min_down = min_updown;
    g.init_on = init.is_some();
    g.init_power = init.unwrap_or(0.0);
    g.init_periods_in_state = 8;
    g
}

/// Two base-load units already running, a mid-merit unit and two peakers.
pub fn default_fleet() -> UcInstance {
    let generators = vec![
        unit(0, (150.0, 350.0), 10.0, 200.0, 2000.0, 4, Some(250.0)),
        unit(1, (80.0, 200.0), 18.0, 150.0, 800.0, 3, Some(120.0)),
        unit(2, (50.0, 150.0), 30.0, 100.0, 400.0, 2, None),
        unit(3, (20.0, 100.0), 50.0, 60.0, 150.0, 1, None),
        unit(4, (10.0, 80.0), 80.0, 30.0, 50.0, 1, None),
    ];
    let demand = vec![420.0, 380.0, 360.0, 380.0, 480.0, 600.0, 680.0, 720.0, 700.0, 640.0, 560.0, 480.0];
    UcInstance::new(generators, demand, None).expect("default fleet is valid")
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            base: default_fleet(),
            train_size: 200,
            test_size: 100,
            demand_range: (0.8, 1.2),
            fuel_range: (0.8, 1.2),
            max_redraws: 20,
            train: TrainConfig {
                hidden: 32,
                layers: 6,
                epochs: 150,
                learning_rate: 5e-4,
                ..TrainConfig::default()
            },
            solver: SolverConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), KvError> {
        let bad = |m: &str| Err(KvError::Invalid(m.to_string()));
        if self.train_size < 1 || self.test_size < 1 {
            return bad("train_size and test_size must be >= 1");
        }
        for (name, (lo, hi)) in [("demand", self.demand_range), ("fuel", self.fuel_range)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(KvError::Invalid(format!("{name} range must satisfy 0 < lo <= hi")));
            }
        }
        self.train.validate().map_err(|e| KvError::Invalid(e.to_string()))?;
        self.solver.validate().map_err(|e| KvError::Invalid(e.to_string()))?;
        self.base.validate().map_err(|e| KvError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Reads overrides of the defaults; `dir` resolves `base_instance`.
    pub fn from_kv(text: &str, dir: &Path) -> Result<Self, KvError> {
        let kv = KvMap::parse(text)?;
        if let Some(k) = kv.keys().find(|k| !KEYS.contains(k)) {
            return Err(KvError::Invalid(format!("unknown config key `{k}`")));
        }
        let mut c = Self::default();
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.get_opt($key)? {
                    $field = v;
                }
            };
        }
        set!("seed", c.seed);
        set!("train_size", c.train_size);
        set!("test_size", c.test_size);
        set!("demand_lo", c.demand_range.0);
        set!("demand_hi", c.demand_range.1);
        set!("fuel_lo", c.fuel_range.0);
        set!("fuel_hi", c.fuel_range.1);
        set!("max_redraws", c.max_redraws);
        set!("hidden", c.train.hidden);
        set!("layers", c.train.layers);
        set!("epochs", c.train.epochs);
        set!("learning_rate", c.train.learning_rate);
        set!("feas_tol", c.solver.feas_tol);
        set!("node_limit", c.solver.node_limit);
        set!("baseline_hidden", c.baseline.hidden);
        set!("baseline_epochs", c.baseline.epochs);
        set!("baseline_learning_rate", c.baseline.learning_rate);
        if let Some(out) = kv.get_opt::<String>("out")? {
            c.out = PathBuf::from(out);
        }
        if let Some(path) = kv.get_opt::<String>("base_instance")? {
            let path = dir.join(path);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| KvError::Invalid(format!("cannot read {}: {e}", path.display())))?;
            c.base = UcInstance::from_kv(&text)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            seed: self.seed,
            ..self.baseline.clone()
        }
    }
}
