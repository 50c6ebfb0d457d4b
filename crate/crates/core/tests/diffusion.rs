mod common;

use aoi_core::diffusion::{forward_noise, make_schedule, DiffusionSchedule, ScheduleKind};
use aoi_core::nn::{Activation, Mat};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn gradient_through_full_chain_matches_finite_differences() {
    for seed in [1, 2, 3] {
        let rel = common::diffusion_fd_gradient(seed).unwrap();
        assert!(rel < 1e-4, "seed {seed}: relative error {rel:e}");
    }
}

#[test]
fn oracle_reverse_chain_reconstructs_clean_action() {
    for kind in [ScheduleKind::Linear, ScheduleKind::Cosine] {
        let schedule = DiffusionSchedule::new(kind, 5, 1e-4, 0.2).unwrap();
        for seed in 0..20 {
            let err = common::oracle_round_trip(seed, &schedule);
            assert!(err < 1e-6, "{kind:?} seed {seed}: error {err:e}");
        }
    }
}

#[test]
fn forward_noise_moments() {
    let schedule = make_schedule(5, 1e-4, 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let a0 = [0.6];
    let n = 100_000;
    for k in 1..=5 {
        let xs: Vec<f64> = (0..n)
            .map(|_| forward_noise(&a0, k, &schedule, &[rng.sample(StandardNormal)])[0])
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let ab = schedule.alpha_bar(k);
        let want_var = 1.0 - ab;
        assert!(
            (var - want_var).abs() / want_var < 0.02,
            "k={k}: var {var} want {want_var}"
        );
        assert!((mean - ab.sqrt() * 0.6).abs() < 0.01, "k={k}: mean {mean}");
    }
}

#[test]
fn single_state_actor_reaches_critic_peak() {
    let c = common::single_state_convergence(11, 500, 0.1, 3e-4, Activation::Tanh);
    assert!(c.first_within.is_some(), "{c:?}");
}

#[test]
fn identity_output_denoiser_settles_on_critic_peak() {
    let c = common::single_state_convergence(11, 500, 0.1, 3e-4, Activation::Identity);
    assert!(c.first_within.is_some() && c.final_distance < 0.1, "{c:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sampler_output_shape_and_range(batch in 1usize..9, seed in any::<u64>(), obs_dim in 1usize..6, act_dim in 1usize..5) {
        let actor = common::small_actor(seed, obs_dim, act_dim, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = Mat::from_vec(batch, obs_dim, (0..batch * obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect());
        let a = actor.sample_batch(&obs, &mut rng);
        prop_assert_eq!((a.rows, a.cols), (batch, act_dim));
        prop_assert!(a.data.iter().all(|v| v.abs() <= 1.0));
        let one = actor.sample_action(obs.row(0), &mut rng, true);
        prop_assert_eq!(one.action.len(), act_dim);
        prop_assert_eq!(one.chain.unwrap().len(), 6);
    }

    #[test]
    fn schedule_products_are_consistent(steps in 1usize..20, lo in 1e-5f64..0.05, span in 0.0f64..0.5) {
        let s = make_schedule(steps, lo, lo + span).unwrap();
        let mut prod = 1.0;
        for k in 1..=steps {
            prop_assert!((s.alpha(k) - (1.0 - s.beta(k))).abs() < 1e-15);
            prod *= s.alpha(k);
            prop_assert!((s.alpha_bar(k) - prod).abs() < 1e-12);
        }
        let last = if steps == 1 { lo } else { lo + span };
        prop_assert!((s.beta(1) - lo).abs() < 1e-15);
        prop_assert!((s.beta(steps) - last).abs() < 1e-12);
    }
}
