use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{her_augment, run_rollout, Agent, AgentConfig, Exploration, Losses, RegionBuffers};
use crate::env::{EnvConfig, EnvError, Region};
use crate::error::ConfigError;
use crate::experiments::{self, ScoreReport};
use crate::nn::{AdamConfig, NeuralError};

/// How minibatches are composed from the two per-region buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TbnuMode {
    /// `B/2` rows from each region in a single gradient step.
    Balanced,
    /// One `B/2` step on the left buffer, then one on the right.
    Sequential,
    /// `B` rows drawn uniformly from both buffers together.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub rollouts_per_epoch: usize,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub her_k: usize,
    pub exploration: Exploration,
    /// Transitions per region buffer.
    pub buffer_capacity: usize,
    pub updates_per_epoch: usize,
    pub eval_rollouts: usize,
    pub seed: u64,
    pub tbnu: TbnuMode,
    pub actor_adam: AdamConfig,
    pub critic_adam: AdamConfig,
    pub action_l2: f64,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            rollouts_per_epoch: 100,
            gamma: 0.98,
            tau: 0.05,
            batch_size: 256,
            her_k: 4,
            exploration: Exploration::default(),
            buffer_capacity: 1_000_000,
            updates_per_epoch: 400,
            eval_rollouts: 50,
            seed: 0,
            tbnu: TbnuMode::Balanced,
            actor_adam: AdamConfig::default(),
            critic_adam: AdamConfig::default(),
            action_l2: 0.0,
            checkpoint_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(ConfigError::invalid(key, msg)) };
        check(self.epochs > 0, "train.epochs", "must be positive")?;
        check(self.rollouts_per_epoch > 0, "train.rollouts_per_epoch", "must be positive")?;
        check(self.gamma > 0.0 && self.gamma < 1.0, "train.gamma", "must lie in (0, 1)")?;
        check(self.tau > 0.0 && self.tau <= 1.0, "train.tau", "must lie in (0, 1]")?;
        check(
            self.batch_size > 0 && self.batch_size % 2 == 0,
            "train.batch_size",
            "must be positive and even",
        )?;
        check(self.buffer_capacity > 0, "train.buffer_capacity", "must be positive")?;
        check(self.eval_rollouts > 0, "train.eval_rollouts", "must be positive")?;
        let e = self.exploration;
        check(
            (0.0..=1.0).contains(&e.random_eps),
            "train.exploration.random_eps",
            "must lie in [0, 1]",
        )?;
        check(
            e.noise_std >= 0.0 && e.noise_std.is_finite(),
            "train.exploration.noise_std",
            "must be non-negative",
        )?;
        check(
            self.action_l2 >= 0.0 && self.action_l2.is_finite(),
            "train.action_l2",
            "must be non-negative",
        )?;
        for (key, adam) in [("train.actor_adam", self.actor_adam), ("train.critic_adam", self.critic_adam)] {
            check(
                adam.learning_rate > 0.0
                    && (0.0..1.0).contains(&adam.beta1)
                    && (0.0..1.0).contains(&adam.beta2)
                    && adam.epsilon > 0.0,
                key,
                "needs lr > 0, betas in [0, 1), epsilon > 0",
            )?;
        }
        Ok(())
    }

    pub fn agent_config(&self, env: &EnvConfig) -> AgentConfig {
        AgentConfig {
            gamma: self.gamma,
            tau: self.tau,
            break_penalty: env.break_penalty,
            action_l2: self.action_l2,
        }
    }

    /// Environment steps over the whole run.
    pub fn total_steps(&self, env: &EnvConfig) -> usize {
        self.epochs * self.rollouts_per_epoch * env.horizon
    }

    /// Evaluation seed, the same for every epoch of a run.
    pub fn eval_seed(&self) -> u64 {
        self.seed ^ 0x5eed_e7a1
    }
}

/// Stable column order of the per-epoch metrics table.
pub const METRICS_COLUMNS: [&str; 13] = [
    "epoch",
    "env_steps",
    "score",
    "score_left",
    "score_right",
    "mean_episode_reward",
    "critic_loss",
    "actor_loss",
    "mean_q",
    "buffer_left",
    "buffer_right",
    "updates",
    "wall_clock_s",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub env_steps: usize,
    pub score: f64,
    /// NaN when the evaluation drew no rollout in the region.
    pub score_left: f64,
    pub score_right: f64,
    pub mean_episode_reward: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_q: f64,
    pub buffer_left: usize,
    pub buffer_right: usize,
    /// Gradient steps taken this epoch.
    pub updates: usize,
    pub wall_clock_s: f64,
}

impl EpochMetrics {
    pub fn csv_header() -> String {
        METRICS_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            self.epoch,
            self.env_steps,
            self.score,
            self.score_left,
            self.score_right,
            self.mean_episode_reward,
            self.critic_loss,
            self.actor_loss,
            self.mean_q,
            self.buffer_left,
            self.buffer_right,
            self.updates,
            self.wall_clock_s
        )
    }

    /// The metrics with the wall-clock entry cleared, for reproducibility
    /// comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_clock_s: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("non-finite loss at epoch {epoch}, update {update}")]
    NonFinite {
        epoch: usize,
        update: usize,
        /// Networks as they were just before the failing update.
        snapshot: Box<Agent>,
        metrics: Vec<EpochMetrics>,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub metrics: Vec<EpochMetrics>,
    pub final_report: ScoreReport,
}

/// Runs the full epoch loop. `on_epoch` sees every epoch's metrics together
/// with the networks at that point.
pub fn train(
    cfg: &TrainConfig,
    env: &EnvConfig,
    on_epoch: &mut dyn FnMut(&EpochMetrics, &Agent),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    env.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agent = Agent::new(env.obs_dim(), env.a_max, cfg.actor_adam, cfg.critic_adam, &mut rng);
    let agent_cfg = cfg.agent_config(env);
    let mut buffers = RegionBuffers::new(env.obs_dim(), cfg.buffer_capacity);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let started = Instant::now();
    let mut last_report = None;

    for epoch in 1..=cfg.epochs {
        let mut reward_sum = 0.0;
        for _ in 0..cfg.rollouts_per_epoch {
            let episode = run_rollout(env, &agent.actor, cfg.exploration, &mut rng, false)?;
            reward_sum += episode.total_reward();
            let augmented = her_augment(&episode, cfg.her_k, env, &mut rng);
            buffers.store(episode.region, &augmented);
        }

        let mut losses = Vec::with_capacity(cfg.updates_per_epoch * 2);
        for update in 0..cfg.updates_per_epoch {
            let batches = match cfg.tbnu {
                TbnuMode::Balanced => buffers.sample_balanced(cfg.batch_size, &mut rng).into_iter().collect(),
                TbnuMode::Sequential => [Region::Left, Region::Right]
                    .into_iter()
                    .filter_map(|r| buffers.sample_region(r, cfg.batch_size / 2, &mut rng))
                    .collect(),
                TbnuMode::Off => buffers.sample_union(cfg.batch_size, &mut rng).into_iter().collect::<Vec<_>>(),
            };
            for batch in batches {
                let before = agent.clone();
                match agent.update_step(&batch, &agent_cfg) {
                    Ok(l) => losses.push(l),
                    Err(NeuralError::NonFinite) => {
                        return Err(TrainError::NonFinite {
                            epoch,
                            update,
                            snapshot: Box::new(before),
                            metrics,
                        })
                    }
                    Err(e) => panic!("update shapes are fixed by construction: {e}"),
                }
            }
        }

        let report = experiments::evaluate(&agent.actor, env, cfg.eval_rollouts, cfg.eval_seed())?;
        let mean = |f: fn(&Losses) -> f64| {
            if losses.is_empty() {
                f64::NAN
            } else {
                losses.iter().map(f).sum::<f64>() / losses.len() as f64
            }
        };
        let m = EpochMetrics {
            epoch,
            env_steps: epoch * cfg.rollouts_per_epoch * env.horizon,
            score: report.score,
            score_left: report.score_left.unwrap_or(f64::NAN),
            score_right: report.score_right.unwrap_or(f64::NAN),
            mean_episode_reward: reward_sum / cfg.rollouts_per_epoch as f64,
            critic_loss: mean(|l| l.critic),
            actor_loss: mean(|l| l.actor),
            mean_q: mean(|l| l.mean_q),
            buffer_left: buffers.get(Region::Left).len(),
            buffer_right: buffers.get(Region::Right).len(),
            updates: losses.len(),
            wall_clock_s: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: score {:.4} (L {:.4} R {:.4}) critic {:.4}",
            m.score,
            m.score_left,
            m.score_right,
            m.critic_loss
        );
        on_epoch(&m, &agent);
        metrics.push(m);
        last_report = Some(report);
    }

    Ok(TrainOutcome {
        agent,
        metrics,
        final_report: last_report.expect("at least one epoch"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            rollouts_per_epoch: 4,
            batch_size: 16,
            updates_per_epoch: 3,
            eval_rollouts: 4,
            buffer_capacity: 10_000,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn protocol_step_count() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.total_steps(&EnvConfig::default()), 2_400_000);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let bad = [
            TrainConfig {
                batch_size: 255,
                ..TrainConfig::default()
            },
            TrainConfig {
                gamma: 1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                tau: 0.0,
                ..TrainConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn one_metrics_row_per_epoch_and_reproducible() {
        let env = EnvConfig::default();
        let run = || {
            let mut seen = 0;
            let out = train(&tiny(), &env, &mut |_, _| seen += 1).unwrap();
            assert_eq!(seen, 2);
            out
        };
        let a = run();
        let b = run();
        assert_eq!(a.metrics.len(), 2);
        let strip = |m: &[EpochMetrics]| m.iter().map(EpochMetrics::without_timing).collect::<Vec<_>>();
        assert_eq!(strip(&a.metrics), strip(&b.metrics));
        assert_eq!(a.agent, b.agent);
        for m in &a.metrics {
            assert!((0.0..=0.4).contains(&m.score));
            // every stored transition comes with her_k relabeled copies
            assert_eq!((m.buffer_left + m.buffer_right) % 5, 0);
            assert!(m.buffer_left + m.buffer_right <= m.epoch * 4 * 60 * 5);
        }
    }

    #[test]
    fn sequential_mode_takes_two_steps_per_update() {
        let cfg = TrainConfig {
            tbnu: TbnuMode::Sequential,
            rollouts_per_epoch: 20,
            ..tiny()
        };
        let out = train(&cfg, &EnvConfig::default(), &mut |_, _| {}).unwrap();
        assert_eq!(out.metrics[0].updates, 6);
    }

    #[test]
    fn csv_row_matches_header_width() {
        let out = train(&tiny(), &EnvConfig::default(), &mut |_, _| {}).unwrap();
        let cols = EpochMetrics::csv_header().split(',').count();
        assert_eq!(out.metrics[0].csv_row().split(',').count(), cols);
    }
}
