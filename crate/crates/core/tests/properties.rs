mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use sensact_core::covariance::steady_error_cov;
use sensact_core::plant::{mode_matrices, rendezvous_system};
use sensact_core::search::{search_fixed_length, CostWeights, Searcher, SearchOptions};
use sensact_core::sequence::{
    admissibility, dwell_feasible_with, irreducible_core, is_irreducible, DwellConstants, DwellMode,
};
use sensact_core::sim::{run_ensemble, SimConfig};
use sensact_core::{Matrix, SwitchSequence, Vector};

#[test]
fn lyapunov_matches_kronecker_oracle() {
    let errors = lyapunov_oracle_errors(100, 11);
    let worst = errors.iter().copied().fold(0.0, f64::max);
    assert!(worst <= 1e-8, "worst relative error {worst:e}");
}

#[test]
fn dare_matches_scalar_closed_form() {
    let errors = dare_oracle_errors(100, 12);
    let worst = errors.iter().copied().fold(0.0, f64::max);
    assert!(worst <= 1e-8, "worst relative error {worst:e}");
}

#[test]
fn steady_covariances_are_periodic_fixed_points() {
    let mut rng = rng(13);
    for _ in 0..50 {
        let (inst, s) = random_admissible(&mut rng, 6);
        let res = periodic_fixed_point_residual(&inst, &s);
        assert!(res <= 1e-8, "residual {res:e} for {s}");
    }
}

#[test]
fn reducibility_matches_rotation_oracle() {
    for len in 1..=10usize {
        for i in 0..(1u64 << len) {
            let w = SwitchSequence::from_index(i, len);
            let period = rotation_period(&w);
            let core = irreducible_core(&w);
            assert_eq!(core.len(), period, "{w}");
            assert_eq!(core.bits(), &w.bits()[..period]);
            assert_eq!(is_irreducible(&w), period == len);
            assert_eq!(core.repeat(len / period), w);
        }
    }
}

#[test]
fn core_and_word_verdicts_agree() {
    let (model, gains) = rendezvous_system().unwrap();
    let rendezvous = mode_matrices(&model, &gains).unwrap();
    let mut rng = rng(14);
    let mut mms = vec![rendezvous];
    mms.extend((0..5).map(|_| random_instance(&mut rng).mm));
    for mm in &mms {
        for len in 1..=6usize {
            for i in 0..(1u64 << len) {
                let w = SwitchSequence::from_index(i, len);
                let core = irreducible_core(&w);
                let (Ok(rw), Ok(rc)) = (admissibility(&w, mm), admissibility(&core, mm)) else {
                    continue;
                };
                assert_eq!(rw.admissible, rc.admissible, "{w}");
                let power = (len / core.len()) as i32;
                let expect = rc.qbar.powi(power);
                assert!((rw.qbar - expect).abs() <= 1e-6 * (1.0 + expect), "{w}: {} vs {expect}", rw.qbar);
            }
        }
    }
}

#[test]
fn core_and_word_costs_agree() {
    let (model, gains) = rendezvous_system().unwrap();
    let mm = mode_matrices(&model, &gains).unwrap();
    let w = CostWeights::error_trace(6);
    let searcher = Searcher::new(&model, &mm, w.clone(), SearchOptions::default()).unwrap();
    for len in 1..=6usize {
        for i in 0..(1u64 << len) {
            let word = SwitchSequence::from_index(i, len);
            let eval = searcher.evaluate(&irreducible_core(&word)).unwrap();
            let Some(cost) = eval.cost else { continue };
            let err = steady_error_cov(&word, &mm, &model).unwrap();
            let direct = sensact_core::search::sequence_cost(&word, &err, None, &w).unwrap();
            assert!((cost - direct).abs() <= 1e-9 * cost, "{word}: {cost} vs {direct}");
        }
    }
}

#[test]
fn contraction_inequality_holds() {
    let mut rng = rng(15);
    for _ in 0..20 {
        let (inst, s) = random_admissible(&mut rng, 6);
        let n = inst.model.states();
        let p0 = random_psd(&mut rng, n, 0.0) * rng.random_range(0.1..100.0);
        let slack = contraction_violation(&inst, &s, 30, &p0);
        assert!(slack <= 1e-10, "violation {slack:e} for {s}");
    }
}

#[test]
fn rigorous_dwell_pass_implies_admissible() {
    let mut rng = rng(16);
    let mut passes = 0;
    for _ in 0..40 {
        let inst = random_instance(&mut rng);
        for len in 1..=8usize {
            for i in 0..(1u64 << len) {
                let s = SwitchSequence::from_index(i, len);
                let Ok(constants) = DwellConstants::for_mode(&inst.mm, DwellMode::Rigorous, len) else {
                    continue;
                };
                let Ok(check) = dwell_feasible_with(&s, &inst.mm.rates, constants) else { continue };
                if check.pass {
                    passes += 1;
                    assert!(admissibility(&s, &inst.mm).unwrap().admissible, "{s}");
                }
            }
        }
    }
    assert!(passes > 0);
}

#[test]
fn seeded_ensembles_are_bit_identical_across_thread_counts() {
    let (model, gains) = rendezvous_system().unwrap();
    let s: SwitchSequence = "0011".parse().unwrap();
    let cfg = SimConfig::new(
        80,
        16,
        99,
        Vector::from_vec(vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
        Matrix::identity(6, 6) * 0.01,
        3,
    );
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_ensemble(&model, &gains, &s, &cfg).unwrap())
    };
    let a = run(1);
    let b = run(4);
    let c = run(4);
    assert_eq!(a, b);
    assert_eq!(b, c);
}

#[test]
fn search_is_deterministic() {
    let (model, gains) = rendezvous_system().unwrap();
    let mm = mode_matrices(&model, &gains).unwrap();
    let opts = SearchOptions {
        keep_table: true,
        ..Default::default()
    };
    let w = CostWeights::error_trace(6);
    let a = search_fixed_length(7, &model, &mm, &w, opts).unwrap();
    let b = search_fixed_length(7, &model, &mm, &w, opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn constant_words_never_win_when_both_modes_are_needed() {
    let (model, gains) = rendezvous_system().unwrap();
    let mm = mode_matrices(&model, &gains).unwrap();
    for n in 1..=8 {
        let r = search_fixed_length(n, &model, &mm, &CostWeights::error_trace(6), SearchOptions::default()).unwrap();
        if let Some(best) = r.best {
            assert!(!best.word.is_constant());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn admissibility_is_rotation_invariant(bits in proptest::collection::vec(any::<bool>(), 1..10), k in 0usize..10) {
        let (model, gains) = rendezvous_system().unwrap();
        let mm = mode_matrices(&model, &gains).unwrap();
        let s = SwitchSequence::new(bits).unwrap();
        let a = admissibility(&s, &mm).unwrap();
        let b = admissibility(&s.rotate(k), &mm).unwrap();
        prop_assert_eq!(a.admissible, b.admissible);
        prop_assert!((a.qbar - b.qbar).abs() <= 1e-8 * (1.0 + a.qbar));
    }

    #[test]
    fn steady_cost_is_rotation_invariant(bits in proptest::collection::vec(any::<bool>(), 4..9), k in 0usize..9) {
        let (model, gains) = rendezvous_system().unwrap();
        let mm = mode_matrices(&model, &gains).unwrap();
        let s = SwitchSequence::new(bits).unwrap();
        if admissibility(&s, &mm).unwrap().admissible {
            let w = CostWeights::error_trace(6);
            let j = |s: &SwitchSequence| {
                let err = steady_error_cov(s, &mm, &model).unwrap();
                sensact_core::search::sequence_cost(s, &err, None, &w).unwrap()
            };
            let (a, b) = (j(&s), j(&s.rotate(k)));
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }
    }
}
