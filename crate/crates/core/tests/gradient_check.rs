//! Central finite differences as an independent check of the hand-written
//! GCNN gradients.

mod common;

#[test]
fn analytic_gradient_matches_central_differences() {
    for seed in 0..6u64 {
        let err = common::gradient_check(seed);
        eprintln!("seed {seed}: max relative error {err:e}");
        assert!(err <= 1e-4, "seed {seed}: max relative error {err:e}");
    }
}
