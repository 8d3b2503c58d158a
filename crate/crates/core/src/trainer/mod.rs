//! Off-policy training: exploration, rollouts, hindsight relabeling,
//! per-region replay and DDPG updates.

mod agent;
mod replay;
mod train;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use agent::{Agent, AgentConfig, Losses};
pub use replay::{Batch, RegionBuffers, ReplayBuffer};
pub use train::{train, EpochMetrics, TbnuMode, TrainConfig, TrainError, TrainOutcome, METRICS_COLUMNS};

use crate::env::{self, compute_reward, DrSample, EnvConfig, EnvError, Region};
use crate::nn::Mlp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: f64,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Normal force measured after the action.
    pub achieved: f64,
    pub goal: f64,
    pub in_contact: bool,
    /// Set when the step broke contact. Horizon truncation is not terminal.
    pub terminal: bool,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub region: Region,
    pub initial_angle: f64,
    pub sample: DrSample,
}

impl Episode {
    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    /// One JSON object per transition.
    pub fn to_jsonl(&self) -> String {
        self.transitions
            .iter()
            .map(|t| serde_json::to_string(t).expect("transition serializes") + "\n")
            .collect()
    }
}

/// Anything that maps a flattened observation to an action.
pub trait Policy {
    fn act(&self, obs: &[f64]) -> f64;
}

impl Policy for Mlp {
    fn act(&self, obs: &[f64]) -> f64 {
        self.predict_one(obs)[0]
    }
}

impl<F: Fn(&[f64]) -> f64> Policy for F {
    fn act(&self, obs: &[f64]) -> f64 {
        self(obs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Exploration {
    /// Probability of a uniformly random action.
    pub random_eps: f64,
    /// Gaussian noise standard deviation as a fraction of `a_max`.
    pub noise_std: f64,
}

impl Default for Exploration {
    fn default() -> Self {
        Self {
            random_eps: 0.2,
            noise_std: 0.1,
        }
    }
}

impl Exploration {
    pub const NONE: Self = Self {
        random_eps: 0.0,
        noise_std: 0.0,
    };
}

pub fn select_action<P: Policy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    obs: &[f64],
    a_max: f64,
    exploration: Exploration,
    rng: &mut R,
    deterministic: bool,
) -> f64 {
    if deterministic {
        return policy.act(obs).clamp(-a_max, a_max);
    }
    if exploration.random_eps > 0.0 && rng.random::<f64>() < exploration.random_eps {
        return rng.random_range(-a_max..=a_max);
    }
    let mut action = policy.act(obs);
    if exploration.noise_std > 0.0 {
        action += Normal::new(0.0, exploration.noise_std * a_max).unwrap().sample(rng);
    }
    action.clamp(-a_max, a_max)
}

/// Resets the environment and plays one episode of at most `T` steps.
pub fn run_rollout<P: Policy + ?Sized, R: Rng + ?Sized>(
    cfg: &EnvConfig,
    policy: &P,
    exploration: Exploration,
    rng: &mut R,
    deterministic: bool,
) -> Result<Episode, EnvError> {
    let (mut state, _, region) = env::reset(cfg, rng)?;
    let sample = *state.sample();
    let mut obs = state.obs_vector();
    let mut transitions = Vec::with_capacity(cfg.horizon);
    loop {
        let action = select_action(policy, &obs, cfg.a_max, exploration, rng, deterministic);
        let outcome = state.step(action)?;
        let next_obs = state.obs_vector();
        transitions.push(Transition {
            obs: std::mem::replace(&mut obs, next_obs.clone()),
            action: outcome.info.action,
            reward: outcome.reward,
            next_obs,
            achieved: outcome.info.f_n,
            goal: state.goal(),
            in_contact: outcome.info.in_contact,
            terminal: outcome.info.contact_broken,
            region,
        });
        if outcome.terminated {
            break;
        }
    }
    Ok(Episode {
        transitions,
        region,
        initial_angle: sample.contact_angle,
        sample,
    })
}

/// Hindsight relabeling with the "future" strategy: the episode's own
/// transitions followed, for every step `t`, by `k` copies whose goal is the
/// force achieved at a uniformly drawn step `>= t`.
pub fn her_augment<R: Rng + ?Sized>(episode: &Episode, k: usize, cfg: &EnvConfig, rng: &mut R) -> Vec<Transition> {
    let steps = &episode.transitions;
    let mut out = Vec::with_capacity(steps.len() * (k + 1));
    out.extend(steps.iter().cloned());
    for (t, transition) in steps.iter().enumerate() {
        for _ in 0..k {
            let future = rng.random_range(t..steps.len());
            out.push(relabel(transition, steps[future].achieved, cfg));
        }
    }
    out
}

/// Replaces the goal of a transition and recomputes its reward. The goal is
/// the last observation entry.
pub fn relabel(t: &Transition, goal: f64, cfg: &EnvConfig) -> Transition {
    let mut r = t.clone();
    let scaled = goal / cfg.force_scale;
    *r.obs.last_mut().expect("observation holds the goal") = scaled;
    *r.next_obs.last_mut().expect("observation holds the goal") = scaled;
    r.goal = goal;
    r.reward = compute_reward(t.achieved, goal, t.in_contact, cfg.break_penalty);
    r
}
