#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uclab::gcnn::{gradient, init_params, loss, GcnnParams, InputScaling, LabeledGraph, TrainConfig};
use uclab::graph::{BipartiteGraph, ConNode, Edge, VarNode};
use uclab::milp::{Constraint, MilpProblem, RowSense, Variable};
use uclab::uc::{GeneratorSpec, UcInstance};

const STEP: f64 = 1e-5;

/// Small random fleet: 1..=max_g units, 1..=max_t periods, optional ramps.
pub fn random_uc(seed: u64, max_g: usize, max_t: usize) -> UcInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g_count = rng.gen_range(1..=max_g);
    let horizon = rng.gen_range(1..=max_t);
    let mut cap = 0.0;
    let generators: Vec<GeneratorSpec> = (0..g_count)
        .map(|id| {
            let p_max = rng.gen_range(20..=120) as f64;
            let p_min = (p_max * rng.gen_range(0.0..0.5)).round();
            cap += p_max;
            let mut g = GeneratorSpec::simple(id, p_min, p_max, rng.gen_range(1..=40) as f64);
            g.no_load_cost = rng.gen_range(0..=50) as f64;
            g.startup_cost = rng.gen_range(0..=200) as f64;
            g.shutdown_cost = rng.gen_range(0..=20) as f64;
            g.min_up = rng.gen_range(1..=3);
            g.min_down = rng.gen_range(1..=3);
            g.init_on = rng.gen_bool(0.5);
            g.init_periods_in_state = rng.gen_range(1..=3);
            if g.init_on {
                g.init_power = rng.gen_range(p_min..=p_max).round().clamp(p_min, p_max);
            }
            if rng.gen_bool(0.3) {
                g.ramp_limit = Some(rng.gen_range(10..=60) as f64);
            }
            g
        })
        .collect();
    let demand = (0..horizon).map(|_| (cap * rng.gen_range(0.1..0.9)).round()).collect();
    UcInstance::new(generators, demand, None).expect("valid random instance")
}

fn bound(rng: &mut ChaCha8Rng) -> (f64, f64) {
    match rng.gen_range(0..5) {
        0 => (0.0, f64::INFINITY),
        1 => (f64::NEG_INFINITY, f64::INFINITY),
        2 => (f64::NEG_INFINITY, rng.gen_range(-5.0..5.0)),
        _ => {
            let lo = rng.gen_range(-10.0..10.0);
            (lo, lo + rng.gen_range(0.0..20.0))
        }
    }
}

/// Arbitrary MILP with awkward values: negative, fractional and tiny
/// coefficients, infinite bounds, empty rows and unused variables.
pub fn random_milp(seed: u64) -> MilpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..8);
    let vars: Vec<Variable> = (0..n)
        .map(|j| {
            if rng.gen_bool(0.4) {
                Variable::binary(format!("b{j}"))
            } else {
                let (lo, hi) = bound(&mut rng);
                Variable::continuous(format!("x_{j}"), lo, hi)
            }
        })
        .collect();
    let coef = |rng: &mut ChaCha8Rng| -> f64 {
        match rng.gen_range(0..4) {
            0 => rng.gen_range(-3..=3) as f64,
            1 => rng.gen_range(-1e-7..1e-7),
            _ => rng.gen_range(-100.0..100.0),
        }
    };
    let pick = |rng: &mut ChaCha8Rng, prob: f64| -> Vec<(usize, f64)> {
        let mut terms = Vec::new();
        for j in 0..n {
            if rng.gen_bool(prob) {
                terms.push((j, coef(rng)));
            }
        }
        terms
    };
    let objective = pick(&mut rng, 0.7);
    let offset = if rng.gen_bool(0.5) { coef(&mut rng) } else { 0.0 };
    let rows = rng.gen_range(0..6);
    let constraints = (0..rows)
        .map(|i| {
            let terms = pick(&mut rng, 0.5);
            let sense = [RowSense::Le, RowSense::Eq, RowSense::Ge][rng.gen_range(0..3)];
            Constraint::new(format!("r{i}"), terms, sense, coef(&mut rng))
        })
        .collect();
    MilpProblem::new(vars, objective, offset, constraints).expect("valid random problem")
}

/// Small dense-ish bipartite graph with random features and labels.
pub fn random_graph(rng: &mut ChaCha8Rng) -> LabeledGraph {
    let nv = rng.gen_range(3..8);
    let nc = rng.gen_range(2..6);
    let var_nodes: Vec<VarNode> = (0..nv)
        .map(|i| VarNode {
            name: format!("v{i}"),
            features: [rng.gen_range(-1.0..1.0), f64::from(rng.gen_bool(0.6) as u8), 0.0, rng.gen_range(0.0..1.0)],
        })
        .collect();
    let con_nodes: Vec<ConNode> = (0..nc)
        .map(|i| ConNode {
            name: format!("c{i}"),
            features: [rng.gen_range(-2.0..2.0), rng.gen_range(-1..=1) as f64, rng.gen_range(0.1..1.0), rng.gen_range(-1.0..1.0)],
        })
        .collect();
    let mut edges = Vec::new();
    for c in 0..nc {
        for v in 0..nv {
            if rng.gen_bool(0.5) {
                edges.push(Edge {
                    var: v,
                    con: c,
                    feature: rng.gen_range(-1.0..1.0),
                });
            }
        }
    }
    let binary_mask: Vec<usize> = (0..nv).filter(|&i| var_nodes[i].features[1] == 1.0).collect();
    let labels = binary_mask.iter().map(|_| f64::from(rng.gen_bool(0.5) as u8)).collect();
    let graph = BipartiteGraph {
        var_nodes,
        con_nodes,
        edges,
        binary_mask,
    };
    LabeledGraph::new(graph, labels).unwrap()
}

/// Largest relative deviation between analytic and central-difference
/// derivatives, `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn max_relative_error(params: &GcnnParams, sample: &LabeledGraph) -> f64 {
    let analytic = gradient(params, sample).unwrap().flatten();
    let base = params.flatten();
    let mut probe = params.clone();
    let mut worst = 0.0_f64;
    for k in 0..base.len() {
        let mut shifted = base.clone();
        shifted[k] = base[k] + STEP;
        probe.set_flat(&shifted);
        let up = loss(&probe, sample).unwrap();
        shifted[k] = base[k] - STEP;
        probe.set_flat(&shifted);
        let down = loss(&probe, sample).unwrap();
        let numeric = (up - down) / (2.0 * STEP);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[k] - numeric).abs() / denom);
    }
    worst
}

/// Gradient check on one random graph; returns the worst relative error.
pub fn gradient_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let sample = random_graph(&mut rng);
    let cfg = TrainConfig {
        hidden: 5,
        layers: 2,
        ..TrainConfig::default()
    };
    let mut params = init_params(&cfg, seed);
    params.scaling = InputScaling::fit(std::iter::once(&sample.graph));
    // Nonzero biases so no unit sits exactly on a ReLU kink.
    let mut flat = params.flatten();
    for x in flat.iter_mut() {
        *x += rng.gen_range(-0.05..0.05);
    }
    params.set_flat(&flat);
    max_relative_error(&params, &sample)
}
