//! Direct-prediction baseline: a two-hidden-layer MLP maps demand and fuel
//! costs straight to every decision variable. No LP is solved afterwards.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dive::{rel_error, DiveError, EvalCase, EvalRecord, EvalStats, R2Population, THRESHOLD};
use crate::gcnn::{Adam, Affine, GcnnError, TrainConfig};
use crate::milp::{check_feasible, evaluate_objective, Assignment};
use crate::uc::{build_milp, UcInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 200,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub units: usize,
    pub periods: usize,
    pub in_shift: Vec<f64>,
    pub in_scale: Vec<f64>,
    pub out_shift: Vec<f64>,
    pub out_scale: Vec<f64>,
    pub layers: [Affine; 3],
}

/// Demand profile followed by per-unit fuel cost.
pub fn mlp_features(inst: &UcInstance) -> Vec<f64> {
    inst.demand.iter().copied().chain(inst.generators.iter().map(|g| g.fuel_cost)).collect()
}

fn standardizer(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / n;
        }
    }
    let mut scale = vec![0.0; d];
    for r in rows {
        for ((s, x), m) in scale.iter_mut().zip(r).zip(&mean) {
            *s += (x - m).powi(2) / n;
        }
    }
    for s in &mut scale {
        *s = if *s > 1e-12 { s.sqrt() } else { 1.0 };
    }
    (mean, scale)
}

impl MlpParams {
    fn check_shape(&self, inst: &UcInstance) -> Result<(), DiveError> {
        if inst.generators.len() != self.units || inst.horizon() != self.periods {
            return Err(DiveError::Shape(format!(
                "baseline trained for {} units x {} periods, got {} x {}",
                self.units,
                self.periods,
                inst.generators.len(),
                inst.horizon()
            )));
        }
        Ok(())
    }

    fn hidden_pass(&self, x: &[f64]) -> [Vec<f64>; 3] {
        let z: Vec<f64> = x.iter().zip(&self.in_shift).zip(&self.in_scale).map(|((x, m), s)| (x - m) / s).collect();
        let mut h1 = vec![0.0; self.layers[0].out];
        self.layers[0].apply(&z, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut h2 = vec![0.0; self.layers[1].out];
        self.layers[1].apply(&h1, &mut h2);
        h2.iter_mut().for_each(|v| *v = v.max(0.0));
        [z, h1, h2]
    }

    /// Predicted values of all variables in canonical order.
    pub fn predict(&self, inst: &UcInstance) -> Result<Vec<f64>, DiveError> {
        self.check_shape(inst)?;
        let [_, _, h2] = self.hidden_pass(&mlp_features(inst));
        let mut y = vec![0.0; self.layers[2].out];
        self.layers[2].apply(&h2, &mut y);
        Ok(y.iter().zip(&self.out_shift).zip(&self.out_scale).map(|((y, m), s)| m + s * y).collect())
    }

    fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|a| a.w.iter().chain(&a.b).copied()).collect()
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut k = 0;
        for a in &mut self.layers {
            for v in a.w.iter_mut().chain(a.b.iter_mut()) {
                *v = flat[k];
                k += 1;
            }
        }
    }

    /// Mean squared error on standardized targets, with its gradient.
    fn loss_and_gradient(&self, x: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
        let [z, h1, h2] = self.hidden_pass(x);
        let mut y = vec![0.0; self.layers[2].out];
        self.layers[2].apply(&h2, &mut y);
        let n = y.len() as f64;
        let mut loss = 0.0;
        let dy: Vec<f64> = y
            .iter()
            .zip(target)
            .zip(self.out_shift.iter().zip(&self.out_scale))
            .map(|((y, t), (m, s))| {
                let d = y - (t - m) / s;
                loss += d * d / n;
                2.0 * d / n
            })
            .collect();
        let mut g = self.layers.clone().map(|a| Affine::zeros(a.inp, a.out));
        let mut dh2 = vec![0.0; h2.len()];
        self.layers[2].backward(&h2, &dy, &mut g[2], Some(&mut dh2));
        dh2.iter_mut().zip(&h2).for_each(|(d, h)| if *h <= 0.0 { *d = 0.0 });
        let mut dh1 = vec![0.0; h1.len()];
        self.layers[1].backward(&h1, &dh2, &mut g[1], Some(&mut dh1));
        dh1.iter_mut().zip(&h1).for_each(|(d, h)| if *h <= 0.0 { *d = 0.0 });
        self.layers[0].backward(&z, &dh1, &mut g[0], None);
        (loss, g.iter().flat_map(|a| a.w.iter().chain(&a.b).copied()).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineTrainResult {
    pub params: MlpParams,
    pub loss_history: Vec<f64>,
}

/// Trains on `(instance, optimal assignment)` pairs with Adam, one sample per step.
pub fn baseline_train(train: &[(UcInstance, Assignment)], cfg: &BaselineConfig) -> Result<BaselineTrainResult, DiveError> {
    if train.is_empty() {
        return Err(GcnnError::EmptyDataset.into());
    }
    if cfg.hidden < 1 || cfg.epochs < 1 || !(cfg.learning_rate >= 0.0) {
        return Err(GcnnError::Config("baseline needs hidden >= 1, epochs >= 1, learning rate >= 0".into()).into());
    }
    let units = train[0].0.generators.len();
    let periods = train[0].0.horizon();
    let mut xs = Vec::with_capacity(train.len());
    let mut ys = Vec::with_capacity(train.len());
    for (inst, sol) in train {
        if inst.generators.len() != units || inst.horizon() != periods {
            return Err(DiveError::Shape("training instances differ in size".into()));
        }
        xs.push(mlp_features(inst));
        ys.push(build_milp(inst)?.dense_values(sol)?);
    }
    let (in_shift, in_scale) = standardizer(&xs);
    let (out_shift, out_scale) = standardizer(&ys);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = [xs[0].len(), cfg.hidden, cfg.hidden, ys[0].len()];
    let mut params = MlpParams {
        units,
        periods,
        in_shift,
        in_scale,
        out_shift,
        out_scale,
        layers: [0, 1, 2].map(|l| Affine::glorot(dims[l], dims[l + 1], &mut rng)),
    };
    let adam_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        ..TrainConfig::default()
    };
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len(), &adam_cfg);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut sample_loss = vec![0.0; train.len()];
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            params.set_flat(&flat);
            let (l, g) = params.loss_and_gradient(&xs[k], &ys[k]);
            sample_loss[k] = l;
            adam.step(&mut flat, &g);
        }
        history.push(sample_loss.iter().sum::<f64>() / train.len() as f64);
    }
    params.set_flat(&flat);
    Ok(BaselineTrainResult {
        params,
        loss_history: history,
    })
}

/// Rounds predicted binaries at 0.5 and keeps continuous predictions as they
/// are. Every prediction gets a cost, feasible or not.
pub fn baseline_evaluate(params: &MlpParams, cases: &[EvalCase], feas_tol: f64) -> Result<EvalStats, DiveError> {
    if cases.is_empty() {
        return Err(DiveError::EmptyTestSet);
    }
    let mut records = Vec::with_capacity(cases.len());
    let mut excluded = 0;
    for case in cases {
        let Some(opt) = case.optimum else {
            excluded += 1;
            continue;
        };
        let p = build_milp(&case.instance)?;
        let mut x = params.predict(&case.instance)?;
        for j in p.binary_indices() {
            x[j] = if x[j] >= THRESHOLD { 1.0 } else { 0.0 };
        }
        let a = p.assignment_from(&x);
        let feasible = check_feasible(&p, &a, feas_tol)?.is_feasible();
        let cost = evaluate_objective(&p, &a)?;
        records.push(EvalRecord {
            instance: case.name.clone(),
            feasible,
            opt_cost: opt,
            pred_cost: Some(cost),
            rel_error: Some(rel_error(cost, opt)?),
        });
    }
    Ok(EvalStats::from_records(records, excluded, R2Population::All))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dive::oracle_cases;
    use crate::solve::{solve_milp, SolverConfig};
    use crate::uc::GeneratorSpec;

    fn inst(demand: f64) -> UcInstance {
        UcInstance::new(
            vec![GeneratorSpec::simple(0, 10.0, 100.0, 2.0), GeneratorSpec::simple(1, 10.0, 50.0, 5.0)],
            vec![demand, demand],
            None,
        )
        .unwrap()
    }

    fn labeled(demand: f64) -> (UcInstance, Assignment) {
        let i = inst(demand);
        let r = solve_milp(&build_milp(&i).unwrap(), &SolverConfig::default()).unwrap();
        (i, r.incumbent.unwrap())
    }

    #[test]
    fn memorizes_a_single_instance() {
        let cfg = BaselineConfig {
            hidden: 16,
            epochs: 3000,
            learning_rate: 1e-3,
            seed: 3,
        };
        let res = baseline_train(&[labeled(60.0)], &cfg).unwrap();
        assert!(*res.loss_history.last().unwrap() < 1e-10, "{:?}", res.loss_history.last());
        let cases = oracle_cases(&[inst(60.0)], &SolverConfig::default()).unwrap();
        let stats = baseline_evaluate(&res.params, &cases, 1e-6).unwrap();
        assert_eq!(stats.feasible_rate, 1.0, "{}", stats.to_csv());
        assert!(stats.rel_errors[0].abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let res = baseline_train(&[labeled(60.0), labeled(90.0)], &BaselineConfig { epochs: 2, ..Default::default() }).unwrap();
        let other = UcInstance::new(vec![GeneratorSpec::simple(0, 10.0, 100.0, 2.0)], vec![50.0, 50.0], None).unwrap();
        assert!(matches!(res.params.predict(&other), Err(DiveError::Shape(_))));
    }

    #[test]
    fn infeasible_predictions_stay_in_histogram() {
        let res = baseline_train(&[labeled(60.0), labeled(130.0)], &BaselineConfig { epochs: 1, ..Default::default() }).unwrap();
        let cases = oracle_cases(&[inst(80.0), inst(110.0)], &SolverConfig::default()).unwrap();
        let stats = baseline_evaluate(&res.params, &cases, 1e-9).unwrap();
        let binned: usize = stats.histogram.iter().map(|b| b.feasible + b.infeasible).sum();
        assert_eq!(binned, 2);
        assert_eq!(stats.r2_population, R2Population::All);
    }
}
