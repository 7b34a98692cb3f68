mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uclab::dive::dive_with_probs;
use uclab::gcnn::{forward, init_params, TrainConfig};
use uclab::graph::{encode, relabel};
use uclab::lp_format::{parse_lp, write_lp};
use uclab::metrics::{parse_trial_table, serialize_trial_table, SubtaskOutcome, TrialRecord, TrialTable};
use uclab::milp::check_feasible;
use uclab::solve::{brute_force_milp, solve_lp, solve_milp, BnbStatus, LpStatus, SolverConfig};
use uclab::uc::build_milp;

fn outcome() -> impl Strategy<Value = SubtaskOutcome> {
    prop_oneof![(0u8..=3).prop_map(SubtaskOutcome::ok), Just(SubtaskOutcome::fail())]
}

fn trial_table() -> impl Strategy<Value = TrialTable> {
    (prop::collection::vec(prop::array::uniform5(outcome()), 9), "[A-Za-z][A-Za-z0-9 .-]{0,12}").prop_map(|(cells, llm)| {
        let records = cells
            .into_iter()
            .enumerate()
            .map(|(k, o)| TrialRecord {
                prompt_type: (k / 3) as u8 + 1,
                trial: (k % 3) as u8 + 1,
                obj_cor: o[0],
                con_cor: o[1],
                con_com: o[2],
                error_free: o[3],
                decision_verified: o[4],
            })
            .collect();
        TrialTable::new(llm.trim().to_string(), records).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lp_text_round_trip(seed in any::<u64>()) {
        let p = common::random_milp(seed);
        let text = write_lp(&p);
        prop_assert_eq!(parse_lp(&text).unwrap(), p, "{}", text);
    }

    #[test]
    fn uc_lp_round_trip(seed in any::<u64>()) {
        let p = build_milp(&common::random_uc(seed, 3, 4)).unwrap();
        prop_assert_eq!(parse_lp(&write_lp(&p)).unwrap(), p);
    }

    #[test]
    fn trial_table_round_trip(t in trial_table()) {
        prop_assert_eq!(parse_trial_table(&serialize_trial_table(&t)).unwrap(), t);
    }

    #[test]
    fn objective_is_affine(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let p = common::random_milp(seed);
        let n = p.num_vars();
        let x: Vec<f64> = (0..n).map(|j| (j as f64 * 1.7).sin()).collect();
        let y: Vec<f64> = (0..n).map(|j| (j as f64 * 0.3 + 1.0).cos()).collect();
        let z: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
        let off = p.offset();
        let lhs = p.objective_at(&z) - off;
        let rhs = a * (p.objective_at(&x) - off) + b * (p.objective_at(&y) - off);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn encoding_sizes(seed in any::<u64>()) {
        let p = build_milp(&common::random_uc(seed, 3, 4)).unwrap();
        let g = encode(&p);
        prop_assert_eq!(g.edges.len(), p.nonzeros());
        prop_assert_eq!(g.binary_mask.len(), p.binary_indices().len());
        prop_assert_eq!(g.var_nodes.len(), p.num_vars());
        prop_assert_eq!(g.con_nodes.len(), p.num_constraints());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn branch_and_bound_matches_enumeration(seed in any::<u64>()) {
        let p = build_milp(&common::random_uc(seed, 3, 4)).unwrap();
        let bnb = solve_milp(&p, &SolverConfig::default()).unwrap();
        let brute = brute_force_milp(&p).unwrap();
        prop_assert_eq!(bnb.status, brute.status);
        if bnb.status == BnbStatus::Optimal {
            let (a, b) = (bnb.objective.unwrap(), brute.objective.unwrap());
            prop_assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{} vs {}", a, b);
            prop_assert!(check_feasible(&p, bnb.incumbent.as_ref().unwrap(), 1e-6).unwrap().is_feasible());
        }
    }

    #[test]
    fn relaxation_and_dive_bound_the_optimum(seed in any::<u64>(), pseed in any::<u64>()) {
        let p = build_milp(&common::random_uc(seed, 3, 5)).unwrap();
        let opt = solve_milp(&p, &SolverConfig::default()).unwrap();
        let lp = solve_lp(&p);
        if opt.status == BnbStatus::Optimal {
            let o = opt.objective.unwrap();
            prop_assert_eq!(lp.status, LpStatus::Optimal);
            prop_assert!(lp.objective <= o + 1e-6);
            let mask = p.binary_indices();
            let mut rng = ChaCha8Rng::seed_from_u64(pseed);
            let probs: Vec<f64> = mask.iter().map(|_| rand::Rng::gen_range(&mut rng, 0.0..1.0)).collect();
            let out = dive_with_probs(&p, &mask, &probs, Some(o), 1e-6).unwrap();
            if let Some(c) = out.cost {
                prop_assert!(c >= o - 1e-6, "dive {} below optimum {}", c, o);
            }
        }
    }

    #[test]
    fn gcnn_is_permutation_equivariant(seed in any::<u64>(), pseed in any::<u64>()) {
        let g = encode(&build_milp(&common::random_uc(seed, 3, 4)).unwrap());
        let params = init_params(&TrainConfig { hidden: 6, layers: 2, ..TrainConfig::default() }, seed);
        let mut perm: Vec<usize> = (0..g.var_nodes.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(pseed));
        let before = forward(&params, &g).unwrap();
        let moved = relabel(&g, &perm).unwrap();
        let after = forward(&params, &moved).unwrap();
        // Output k follows mask entry k; the relabeled mask is sorted by new index.
        for (k, &i) in g.binary_mask.iter().enumerate() {
            let k2 = moved.binary_mask.iter().position(|&j| j == perm[i]).unwrap();
            prop_assert!((before[k] - after[k2]).abs() <= 1e-9);
        }
    }
}
