//! Evaluation score, learning-curve utilities, policy variants, force
//! tracking ramps, region-bias analysis and the stick/slip demo.

mod stick_slip;
mod svg;
mod tracking;
mod variants;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use stick_slip::{stick_slip_demo, BoxModel, ContactMode, DemoConfig, DemoResult, DemoStep};
pub use svg::{line_chart, Series};
pub use tracking::{force_tracking_experiment, RampSchedule, TrackingRun, TrackingStep, TRACKING_ANGLES_DEG};
pub use variants::{variant_catalog, VariantSpec};

use crate::controller::{control_action, ForceController, PolicyController};
use crate::env::{self, EnvConfig, EnvError, Region};
use crate::trainer::Policy;

/// Per-step score contribution; lies in `[0, 0.4]`.
pub const SCORE_BAND: f64 = 0.4;

pub fn step_score(reward: f64) -> f64 {
    SCORE_BAND + reward.max(-SCORE_BAND)
}

/// Mean per-step score over all rollouts. Rollouts shorter than `horizon`
/// are padded with zero-score entries so early contact breaks cannot raise
/// the mean. Empty input scores 0.
pub fn score_from_rewards(rewards: &[Vec<f64>], horizon: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for rollout in rewards {
        total += rollout.iter().map(|&r| step_score(r)).sum::<f64>();
        count += rollout.len().max(horizon);
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Trailing mean; the first `window - 1` entries average what is available.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0, "window must be positive");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &v) in series.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub region: Region,
    pub contact_angle: f64,
    pub goal: f64,
    pub rewards: Vec<f64>,
    pub forces: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub score: f64,
    pub score_left: Option<f64>,
    pub score_right: Option<f64>,
    pub seed: u64,
    pub horizon: usize,
    pub rollouts: Vec<RolloutRecord>,
}

impl ScoreReport {
    fn from_rollouts(rollouts: Vec<RolloutRecord>, horizon: usize, seed: u64) -> Self {
        let region_score = |region: Region| {
            let rewards: Vec<Vec<f64>> = rollouts
                .iter()
                .filter(|r| r.region == region)
                .map(|r| r.rewards.clone())
                .collect();
            (!rewards.is_empty()).then(|| score_from_rewards(&rewards, horizon))
        };
        let all: Vec<Vec<f64>> = rollouts.iter().map(|r| r.rewards.clone()).collect();
        Self {
            score: score_from_rewards(&all, horizon),
            score_left: region_score(Region::Left),
            score_right: region_score(Region::Right),
            seed,
            horizon,
            rollouts,
        }
    }

    /// `|left - right|`, when both regions were visited.
    pub fn region_gap(&self) -> Option<f64> {
        Some((self.score_left? - self.score_right?).abs())
    }

    pub fn rollouts_csv(&self) -> String {
        let mut out = String::from("rollout,region,contact_angle,goal,steps,score,mean_abs_error,broke_contact\n");
        for (i, r) in self.rollouts.iter().enumerate() {
            let score = score_from_rewards(std::slice::from_ref(&r.rewards), self.horizon);
            let mae = r.forces.iter().map(|f| (f - r.goal).abs()).sum::<f64>() / r.forces.len().max(1) as f64;
            let broke = r.rewards.len() < self.horizon;
            out.push_str(&format!(
                "{i},{:?},{},{},{},{score},{mae},{broke}\n",
                r.region,
                r.contact_angle,
                r.goal,
                r.rewards.len()
            ));
        }
        out
    }
}

/// Plays `n_rollouts` DR episodes with `controller`, seeded by `seed`.
pub fn evaluate_controller(
    controller: &mut dyn ForceController,
    cfg: &EnvConfig,
    n_rollouts: usize,
    seed: u64,
) -> Result<ScoreReport, EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rollouts = Vec::with_capacity(n_rollouts);
    for _ in 0..n_rollouts {
        let (mut state, _, region) = env::reset(cfg, &mut rng)?;
        let sample = *state.sample();
        let mut rewards = Vec::with_capacity(cfg.horizon);
        let mut forces = Vec::with_capacity(cfg.horizon);
        loop {
            let action = control_action(controller, &state);
            let outcome = state.step(action)?;
            rewards.push(outcome.reward);
            forces.push(outcome.info.f_n);
            if outcome.terminated {
                break;
            }
        }
        rollouts.push(RolloutRecord {
            region,
            contact_angle: sample.contact_angle,
            goal: sample.goal,
            rewards,
            forces,
        });
    }
    Ok(ScoreReport::from_rollouts(rollouts, cfg.horizon, seed))
}

/// Deterministic-action evaluation of an observation-only policy.
pub fn evaluate<P: Policy + ?Sized>(policy: &P, cfg: &EnvConfig, n_rollouts: usize, seed: u64) -> Result<ScoreReport, EnvError> {
    let a_max = cfg.a_max;
    let clipped = |obs: &[f64]| policy.act(obs).clamp(-a_max, a_max);
    evaluate_controller(&mut PolicyController(&clipped), cfg, n_rollouts, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBias {
    pub left: f64,
    pub right: f64,
    pub gap: f64,
}

/// Scores with the randomization restricted to each region in turn.
pub fn region_bias_report(
    controller: &mut dyn ForceController,
    cfg: &EnvConfig,
    n_per_region: usize,
    seed: u64,
) -> Result<RegionBias, EnvError> {
    let mut only = |region: Region| {
        let mut c = cfg.clone();
        c.dr = c.dr.only(region);
        evaluate_controller(controller, &c, n_per_region, seed).map(|r| r.score)
    };
    let left = only(Region::Left)?;
    let right = only(Region::Right)?;
    Ok(RegionBias {
        left,
        right,
        gap: (left - right).abs(),
    })
}
