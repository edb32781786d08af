mod common;

use common::*;
use proptest::prelude::*;
use smccm::{CVector, C64};

fn cvec_strategy(m: usize, scale: f64) -> impl Strategy<Value = CVector> {
    prop::collection::vec((-scale..scale, -scale..scale), m)
        .prop_map(|v| cvec(&v))
        .prop_filter("non-zero", |v| v.norm() > 1e-3)
}

/// `(p, q, r)` of a common length.
fn triple(max_m: usize) -> impl Strategy<Value = (CVector, CVector, CVector)> {
    (2..=max_m).prop_flat_map(|m| (cvec_strategy(m, 1.0), cvec_strategy(m, 1.0), cvec_strategy(m, 2.0)))
}

fn stream(m: usize, len: usize) -> impl Strategy<Value = Vec<CVector>> {
    prop::collection::vec(cvec_strategy(m, 1.5), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn constraint_is_preserved(
        (p, q, s) in (2usize..10).prop_flat_map(|m| (cvec_strategy(m, 1.0), cvec_strategy(m, 1.0), stream(m, 20))),
        gamma in 0.0..0.95f64,
    ) {
        constraint_preserved(&p, &q, &s, gamma).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn projection_is_idempotent(p in (1usize..12).prop_flat_map(|m| cvec_strategy(m, 3.0))) {
        projection_properties(&p).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn projection_is_idempotent_m8(p in cvec_strategy(8, 1.0)) {
        projection_properties(&p).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn updates_land_on_the_strip((p, q, r) in triple(10), gamma in 0.0..0.95f64) {
        hyper_strip_exact(&p, &q, &r, gamma).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn step_branches(mag in 0.0..3.0f64, gamma in 0.0..0.99f64, quad in 0.01..10.0f64) {
        step_branch_table(mag, gamma, quad).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn innovation_check_branches(
        e in -2.0..2.0f64,
        gamma in 0.01..1.5f64,
        seed in any::<u64>(),
        m in 1usize..8,
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let r = random_cvec(&mut rng, m, 1.0);
        let p = random_hpd(&mut rng, m);
        prop_assume!(r.norm() > 1e-6);
        forgetting_branch_table(e, gamma, &r, &p).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn larger_bound_updates_less((p, q, r) in triple(8), g1 in 0.0..0.99f64, g2 in 0.0..0.99f64) {
        data_selectivity_monotone(&p, &q, &r, g1, g2).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn trackers_stay_in_convex_hull(
        beta in 0.01..0.99f64,
        inputs in prop::collection::vec((0.0..5.0f64, 0.0..3.0f64), 1..200),
    ) {
        recursion_convex_hull(beta, &inputs).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn recursions_reach_fixed_points(
        beta in 0.02..0.98f64,
        level in 0.01..4.0f64,
        w_norm in 0.1..3.0f64,
        sigma2 in 0.0..0.5f64,
        tau in 0.0..1.0f64,
    ) {
        recursion_fixed_points(beta, level, w_norm, sigma2, tau).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn pidb_never_below_pdb(
        beta in 0.01..0.99f64,
        tau in 0.001..2.0f64,
        sigma2 in 0.0..0.5f64,
        inputs in prop::collection::vec((0.001..3.0f64, 0.1..3.0f64), 1..100),
    ) {
        pidb_dominates_pdb(beta, tau, sigma2, &inputs).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn energy_is_conserved(
        (p, q, r, w_ref) in (2usize..10).prop_flat_map(|m| {
            (cvec_strategy(m, 1.0), cvec_strategy(m, 1.0), cvec_strategy(m, 2.0), cvec_strategy(m, 1.0))
        }),
        gamma in 0.0..0.95f64,
    ) {
        energy_conservation(&p, &q, &r, &w_ref, gamma).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn hessian_agrees_with_threshold(
        nu in 0.05..2.0f64,
        amp in 0.1..2.0f64,
        inner in 0.1..1.0f64,
        t in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..4),
    ) {
        let t: Vec<C64> = t.into_iter().map(|(a, b)| C64::new(a, b)).collect();
        hessian_convexity_agreement(nu, amp, inner, &t).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn q_function_matches_quadrature(x in -6.0..6.0f64) {
        q_function_values(x).map_err(TestCaseError::fail)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rls_matches_batch_solve(
        (p, s) in (cvec_strategy(8, 1.0), stream(8, 50)),
        delta in prop::sample::select(vec![0.01, 0.1, 1.0]),
    ) {
        rls_batch_oracle(&p, &s, delta).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn strip_branches_are_all_reached() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let mut seen = [0usize; 3];
    for _ in 0..500 {
        let p = random_cvec(&mut rng, 6, 1.0);
        let q = random_cvec(&mut rng, 6, 1.0);
        let r = random_cvec(&mut rng, 6, 1.5);
        match hyper_strip_exact(&p, &q, &r, 0.4).unwrap() {
            StripBranch::Above => seen[0] += 1,
            StripBranch::Below => seen[1] += 1,
            StripBranch::Inside => seen[2] += 1,
        }
    }
    assert!(seen.iter().all(|&n| n > 20), "{seen:?}");
}

#[test]
fn q_function_reference_points() {
    assert_eq!(smccm::analysis::q_function(0.0), 0.5);
    assert!((q_quadrature(1.0) - 0.158_655_253_931_457).abs() < 1e-12);
    assert!((smccm::analysis::q_function(1.0) - 0.158_655_253_931_457).abs() < 1e-12);
}

#[test]
fn hessian_threshold_at_origin() {
    // at t = 0 the Hessian is 2 (16 D - 4) I
    for d in [0.1, 0.25, 0.6] {
        let h = fd_hessian(d, &[C64::new(0.0, 0.0); 2], 1e-4);
        let expect = 2.0 * (16.0 * d - 4.0);
        for i in 0..4 {
            assert!((h[(i, i)] - expect).abs() < 1e-5, "{} vs {expect}", h[(i, i)]);
        }
    }
}
