//! Randomized invariants across the simulator, environment, replay, training
//! and persistence layers. Each suite panics on the first counterexample so
//! the same bodies serve the `properties` target and the acceptance gate.

use std::collections::HashSet;

use forcerl_core::config::{Checkpoint, Config};
use forcerl_core::env::{compute_reward, reset, DrSample, EnvConfig, EnvState, FeatureMask, Region};
use forcerl_core::experiments::{evaluate, score_from_rewards, variant_catalog};
use forcerl_core::sim::{self, POLICY_JOINT};
use forcerl_core::trainer::{
    her_augment, run_rollout, train, Agent, AgentConfig, Batch, EpochMetrics, Exploration, RegionBuffers, TrainConfig,
    Transition,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: u32 = 32;

fn runner() -> TestRunner {
    TestRunner::new(RunnerConfig::with_cases(CASES))
}

fn check<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>)
where
    S::Value: std::fmt::Debug,
{
    if let Err(e) = runner().run(&strategy, test) {
        panic!("{name}: {e}");
    }
}

fn tagged(tag: usize, region: Region, dim: usize) -> Transition {
    Transition {
        obs: vec![tag as f64; dim],
        action: tag as f64,
        reward: -(tag as f64),
        next_obs: vec![tag as f64 + 0.5; dim],
        achieved: 0.0,
        goal: 0.0,
        in_contact: true,
        terminal: tag % 7 == 0,
        region,
    }
}

/// Every balanced minibatch holds exactly half its rows from each region.
pub fn tbnu_batches_split_exactly() {
    check(
        "tbnu split",
        (1usize..400, 1usize..400, 1usize..64, any::<u64>()),
        |(left, right, half, seed)| {
            let mut buffers = RegionBuffers::new(2, 1000);
            for i in 0..left {
                buffers.store(Region::Left, &[tagged(i, Region::Left, 2)]);
            }
            for i in 0..right {
                buffers.store(Region::Right, &[tagged(i, Region::Right, 2)]);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..1000 {
                let batch = buffers.sample_balanced(2 * half, &mut rng).unwrap();
                let l = batch.regions.iter().filter(|r| **r == Region::Left).count();
                prop_assert_eq!(l, half);
                prop_assert_eq!(batch.len() - l, half);
            }
            Ok(())
        },
    );
}

/// Sampled rows are always intact copies of stored transitions.
pub fn replay_only_yields_stored_transitions() {
    check(
        "replay membership",
        (1usize..300, 1usize..200, any::<u64>()),
        |(n, capacity, seed)| {
            let mut buffers = RegionBuffers::new(3, capacity);
            let mut stored: HashSet<(u64, Region)> = HashSet::new();
            for i in 0..n {
                let region = if i % 3 == 0 { Region::Left } else { Region::Right };
                buffers.store(region, &[tagged(i, region, 3)]);
                stored.insert(((i as f64).to_bits(), region));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = buffers.sample_union(64, &mut rng).unwrap();
            for row in 0..batch.len() {
                let tag = batch.actions[row];
                prop_assert!(stored.contains(&(tag.to_bits(), batch.regions[row])));
                prop_assert!(batch.obs.row(row).iter().all(|&v| v == tag));
                prop_assert_eq!(batch.rewards[row], -tag);
                prop_assert_eq!(batch.terminals[row] == 1.0, (tag as usize) % 7 == 0);
            }
            for region in [Region::Left, Region::Right] {
                prop_assert!(buffers.get(region).len() <= capacity);
            }
            Ok(())
        },
    );
}

/// Relabeled transitions carry the reward their new goal implies.
pub fn her_rewards_are_recomputed() {
    check("her recompute", (any::<u64>(), 0usize..6), |(seed, k)| {
        let cfg = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = rng.random_range(-0.05..0.05);
        let policy = move |obs: &[f64]| gain * (obs[obs.len() - 1] - obs[obs.len() - 4]);
        let episode = run_rollout(&cfg, &policy, Exploration::default(), &mut rng, false).unwrap();
        let achieved: Vec<f64> = episode.transitions.iter().map(|t| t.achieved).collect();
        let out = her_augment(&episode, k, &cfg, &mut rng);
        prop_assert_eq!(out.len(), episode.transitions.len() * (k + 1));
        for t in &out {
            prop_assert_eq!(t.reward, compute_reward(t.achieved, t.goal, t.in_contact, cfg.break_penalty));
            prop_assert_eq!(*t.obs.last().unwrap(), t.goal / cfg.force_scale);
            prop_assert_eq!(*t.next_obs.last().unwrap(), t.goal / cfg.force_scale);
        }
        for (i, t) in out[episode.transitions.len()..].iter().enumerate() {
            let source = i / k.max(1);
            prop_assert!(achieved[source..].contains(&t.goal));
            prop_assert_eq!(t.terminal, episode.transitions[source].terminal);
        }
        Ok(())
    });
}

/// Clipped critic targets stay inside the attainable value range.
pub fn critic_targets_stay_in_value_range() {
    check("critic targets", (any::<u64>(), 0.0f64..200.0), |(seed, reward_scale)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agent = Agent::new(5, 0.02, Default::default(), Default::default(), &mut rng);
        let rows = 32;
        let batch = Batch {
            obs: Array2::from_shape_fn((rows, 5), |_| rng.random_range(-3.0..3.0)),
            actions: Array1::from_shape_fn(rows, |_| rng.random_range(-0.02..0.02)),
            rewards: Array1::from_shape_fn(rows, |_| -rng.random_range(0.0..reward_scale.max(1e-9))),
            next_obs: Array2::from_shape_fn((rows, 5), |_| rng.random_range(-3.0..3.0)),
            terminals: Array1::from_shape_fn(rows, |_| if rng.random_bool(0.2) { 1.0 } else { 0.0 }),
            regions: vec![Region::Right; rows],
        };
        let cfg = AgentConfig::default();
        let (lo, hi) = cfg.target_bounds();
        for y in agent.critic_targets(&batch, &cfg) {
            prop_assert!(y >= lo && y <= hi);
        }
        Ok(())
    });
}

/// Mirrored contact angles under negated actions give identical forces.
pub fn mirrored_contacts_mirror_the_action_force_relation() {
    check(
        "mirror symmetry",
        (0.3f64..1.2, 1.0f64..4.0, prop::collection::vec(-0.02f64..0.02, 1..40)),
        |(angle, force, actions)| {
            let cfg = EnvConfig::default();
            let start = |a: f64| DrSample {
                contact_angle: a,
                initial_force: force,
                goal: 3.0,
                motion_velocity: 0.0,
            };
            let mut right = EnvState::from_sample(&cfg, start(angle)).unwrap();
            let mut left = EnvState::from_sample(&cfg, start(-angle)).unwrap();
            for &a in &actions {
                let r = right.step(a).unwrap();
                let l = left.step(-a).unwrap();
                prop_assert!((r.info.f_n - l.info.f_n).abs() < 1e-9, "{} vs {}", r.info.f_n, l.info.f_n);
                prop_assert_eq!(r.info.in_contact, l.info.in_contact);
                if r.terminated {
                    break;
                }
            }
            Ok(())
        },
    );
}

/// At the boundary singularity the policy joint has no first-order effect
/// on the normal force.
pub fn boundary_singularity_has_no_first_order_authority() {
    check("singularity", (0.5f64..8.0, -1e-4f64..1e-4), |(force, dq)| {
        let cfg = EnvConfig::default();
        let state = EnvState::from_sample(
            &cfg,
            DrSample {
                contact_angle: 0.0,
                initial_force: force,
                goal: 1.0,
                motion_velocity: 0.0,
            },
        )
        .unwrap();
        let gain = sim::force_gain(state.contact(), state.arm().q, &cfg.sim, POLICY_JOINT);
        prop_assert!(gain.abs() < 1e-9 * cfg.sim.contact_stiffness);
        let singular = sim::is_singular(state.contact(), state.arm().q, &cfg.sim, POLICY_JOINT, 1e-3).unwrap();
        prop_assert!(singular);
        let mut q = state.arm().q;
        q[POLICY_JOINT] += dq;
        let moved = sim::detect_contact(&sim::forward_kinematics(q, &cfg.sim), state.surface(), &cfg.sim);
        let change = (moved.normal_force - force).abs();
        prop_assert!(
            change <= cfg.sim.contact_stiffness * dq * dq + 1e-9,
            "change {change} for dq {dq}"
        );
        Ok(())
    });
}

pub fn score_is_bounded() {
    check(
        "score bounds",
        prop::collection::vec(prop::collection::vec(-20.0f64..0.0, 0..70), 0..8),
        |rewards| {
            let s = score_from_rewards(&rewards, 60);
            prop_assert!((0.0..=0.4 + 1e-12).contains(&s));
            Ok(())
        },
    );
}

/// Flattened layout, history length and exact feature differences hold for
/// every variant along random episodes.
pub fn observation_layout_and_features() {
    check("observation layout", (any::<u64>(), 0usize..6), |(seed, variant)| {
        let v = variant_catalog()[variant];
        let mut cfg = EnvConfig::default();
        cfg.history_len = v.history_len;
        cfg.features = v.features;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut state, _, _) = reset(&cfg, &mut rng).unwrap();
        let mut forces = vec![state.feature().f_n];
        let mut actions = Vec::new();
        while !state.is_terminated() {
            let a = rng.random_range(-0.03..0.03);
            let out = state.step(a).unwrap();
            prop_assert!(out.reward <= 0.0);
            actions.push(a.clamp(-cfg.a_max, cfg.a_max));
            forces.push(out.info.f_n);
            let obs = state.obs_vector();
            prop_assert_eq!(obs.len(), cfg.obs_dim());
            let hist = state.observation().history;
            prop_assert_eq!(hist.len(), cfg.history_len);
            let newest = hist.last().unwrap();
            prop_assert_eq!(newest.action, *actions.last().unwrap());
            let n = forces.len();
            prop_assert_eq!(newest.feature.d_f, forces[n - 1] - forces[n - 2]);
            if cfg.features == FeatureMask::NO_DDF {
                prop_assert_eq!(obs.len(), cfg.history_len * 3 + 1);
            }
        }
        prop_assert!(state.steps() <= cfg.horizon);
        Ok(())
    });
}

fn tiny_train(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 2,
        rollouts_per_epoch: 6,
        batch_size: 32,
        updates_per_epoch: 4,
        eval_rollouts: 6,
        buffer_capacity: 20_000,
        seed,
        ..TrainConfig::default()
    }
}

fn untimed(m: &[EpochMetrics]) -> Vec<EpochMetrics> {
    m.iter().map(|x| x.without_timing()).collect()
}

/// Same seed, same metrics and weights; different seeds diverge.
pub fn training_is_seed_deterministic() {
    let env = EnvConfig::default();
    for seed in [0, 41] {
        let a = train(&tiny_train(seed), &env, &mut |_, _| {}).unwrap();
        let b = train(&tiny_train(seed), &env, &mut |_, _| {}).unwrap();
        assert_eq!(untimed(&a.metrics), untimed(&b.metrics));
        assert_eq!(a.agent, b.agent);
    }
    let a = train(&tiny_train(1), &env, &mut |_, _| {}).unwrap();
    let b = train(&tiny_train(2), &env, &mut |_, _| {}).unwrap();
    assert_ne!(a.agent, b.agent);
}

/// Without exploration and with a frozen actor, reruns fill the buffers and
/// score the losses identically.
pub fn noiseless_fixed_actor_epochs_repeat() {
    let env = EnvConfig::default();
    let mut cfg = tiny_train(5);
    cfg.exploration = Exploration::NONE;
    cfg.actor_adam.learning_rate = 1e-300;
    let a = train(&cfg, &env, &mut |_, _| {}).unwrap();
    let b = train(&cfg, &env, &mut |_, _| {}).unwrap();
    assert_eq!(untimed(&a.metrics), untimed(&b.metrics));
    assert_eq!(a.agent.actor, b.agent.actor);
}

pub fn evaluation_is_seed_deterministic() {
    let env = EnvConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let agent = Agent::new(env.obs_dim(), env.a_max, Default::default(), Default::default(), &mut rng);
    let a = evaluate(&agent.actor, &env, 10, 77).unwrap();
    let b = evaluate(&agent.actor, &env, 10, 77).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

/// Save, load and re-serialize reproduces the file exactly for every variant.
pub fn checkpoints_round_trip_byte_for_byte() {
    for (i, v) in variant_catalog().iter().enumerate() {
        let mut config = Config::default();
        config.experiment.variant = v.name.to_string();
        config.train.seed = i as u64 * 1000 + 7;
        let (env, train_cfg) = config.resolved().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
        let agent = Agent::new(env.obs_dim(), env.a_max, train_cfg.actor_adam, train_cfg.critic_adam, &mut rng);
        let first = Checkpoint::capture(&agent, &config, i).to_json();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        std::fs::write(&path, &first).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.to_json(), first, "{}", v.name);
        assert_eq!(loaded.agent().unwrap(), agent);
    }
}

/// Named suites in the order the acceptance gate reports them.
pub const SUITES: &[(&str, fn())] = &[
    ("tbnu batch balance", tbnu_batches_split_exactly),
    ("her reward recompute", her_rewards_are_recomputed),
    ("mirror symmetry", mirrored_contacts_mirror_the_action_force_relation),
    ("singularity zero authority", boundary_singularity_has_no_first_order_authority),
    ("checkpoint byte round trip", checkpoints_round_trip_byte_for_byte),
    ("seeded train determinism", training_is_seed_deterministic),
    ("fixed-actor epoch repeat", noiseless_fixed_actor_epochs_repeat),
    ("seeded eval determinism", evaluation_is_seed_deterministic),
    ("replay membership", replay_only_yields_stored_transitions),
    ("critic target range", critic_targets_stay_in_value_range),
    ("score bounds", score_is_bounded),
    ("observation layout", observation_layout_and_features),
];
