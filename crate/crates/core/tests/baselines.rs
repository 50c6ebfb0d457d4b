use aoi_core::baselines::{no_charge_wrap, GreedyMaxAoi, Policy, PolicyKind, RandomPolicy};
use aoi_core::env::{EnvConfig, SlotAction, UavEnv};
use aoi_core::harness::evaluate::{policy_for, rollout_episode};
use aoi_core::rl::{Actor, TrainerConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn uploads(policy: &dyn Policy, seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rollout_episode(&EnvConfig::default(), policy, seed, &mut rng)
        .unwrap()
        .uploads()
}

#[test]
fn no_charge_greedy_uploads_strictly_less() {
    for seed in 0..8 {
        let plain = uploads(&GreedyMaxAoi, seed);
        let wrapped = uploads(&no_charge_wrap(GreedyMaxAoi), seed);
        assert!(wrapped < plain, "seed {seed}: {wrapped} vs {plain}");
    }
}

#[test]
fn every_kind_acts_on_observations() {
    let cfg = EnvConfig::default();
    let (_, obs) = UavEnv::new(cfg.clone(), 1).unwrap();
    let trainer = TrainerConfig {
        hidden_units: 8,
        ..TrainerConfig::default()
    };
    let schedule = trainer.schedule().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for kind in PolicyKind::ALL {
        let actor = kind
            .actor_kind()
            .map(|k| Actor::build(k, cfg.obs_dim(), cfg.action_dim(), 8, &schedule, &mut rng));
        let policy = policy_for(kind, actor).unwrap();
        let a = policy.act(&obs, &mut rng);
        assert_eq!(a.len(), cfg.action_dim(), "{kind}");
        let action = SlotAction::from_slice(&a, cfg.num_devices).unwrap();
        if kind.no_charge() {
            assert_eq!(action.tau(), 0.0, "{kind}");
        }
    }
}

proptest! {
    #[test]
    fn wrapping_twice_equals_wrapping_once(seed in any::<u64>(), obs_seed in any::<u64>()) {
        let (_, obs) = UavEnv::new(EnvConfig::default(), obs_seed).unwrap();
        let once = no_charge_wrap(RandomPolicy);
        let twice = no_charge_wrap(no_charge_wrap(RandomPolicy));
        let a = once.act(&obs, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = twice.act(&obs, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&a, &b);
        let inner = RandomPolicy.act(&obs, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&a[..a.len() - 1], &inner[..inner.len() - 1]);
        prop_assert_eq!(a[a.len() - 1], -1.0);
    }
}
