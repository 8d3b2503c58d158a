use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Batch;
use crate::nn::{AdamConfig, AdamState, Mlp, MlpSpec, NeuralError, OutputActivation};

/// Update-rule constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    /// Contact-break penalty `M`; critic targets are clipped to `[-M/(1-gamma), 0]`.
    pub break_penalty: f64,
    /// Weight of the squared normalized action in the actor loss.
    pub action_l2: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            tau: 0.05,
            break_penalty: 50.0,
            action_l2: 0.0,
        }
    }
}

impl AgentConfig {
    pub fn target_bounds(&self) -> (f64, f64) {
        (-self.break_penalty / (1.0 - self.gamma), 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Losses {
    pub critic: f64,
    pub actor: f64,
    pub mean_q: f64,
}

/// Actor, critic, their Polyak targets and optimizer states.
///
/// The actor maps an observation to `a_max * tanh(.)`; the critic scores
/// `obs ++ [action / a_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub a_max: f64,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        a_max: f64,
        actor_adam: AdamConfig,
        critic_adam: AdamConfig,
        rng: &mut R,
    ) -> Self {
        let actor = Mlp::init(
            &MlpSpec::standard(obs_dim, 1, OutputActivation::Tanh { scale: a_max }),
            rng,
        );
        let critic = Mlp::init(&MlpSpec::standard(obs_dim + 1, 1, OutputActivation::Identity), rng);
        Self::from_networks(actor, critic, a_max, actor_adam, critic_adam)
    }

    /// Targets start as copies of the online networks.
    pub fn from_networks(actor: Mlp, critic: Mlp, a_max: f64, actor_adam: AdamConfig, critic_adam: AdamConfig) -> Self {
        Self {
            actor_opt: AdamState::new(&actor, actor_adam),
            critic_opt: AdamState::new(&critic, critic_adam),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            a_max,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.spec.input_dim()
    }

    fn critic_input(&self, obs: ArrayView2<'_, f64>, actions: ArrayView1<'_, f64>) -> Array2<f64> {
        let scaled = actions.mapv(|a| a / self.a_max).insert_axis(Axis(1));
        concatenate(Axis(1), &[obs, scaled.view()]).expect("row counts agree")
    }

    /// Clipped bootstrap targets `y` for every row of `batch`.
    pub fn critic_targets(&self, batch: &Batch, cfg: &AgentConfig) -> Array1<f64> {
        let next_actions = self.actor_target.predict(batch.next_obs.view());
        let q_next = self
            .critic_target
            .predict(self.critic_input(batch.next_obs.view(), next_actions.column(0)).view());
        let (lo, hi) = cfg.target_bounds();
        let mut y = Array1::zeros(batch.len());
        for i in 0..batch.len() {
            let bootstrap = if batch.terminals[i] > 0.5 { 0.0 } else { cfg.gamma * q_next[[i, 0]] };
            y[i] = (batch.rewards[i] + bootstrap).clamp(lo, hi);
        }
        y
    }

    /// One critic step, one actor step through the updated critic, then
    /// Polyak updates of both targets. Parameters are left untouched when a
    /// loss or gradient is non-finite.
    pub fn update_step(&mut self, batch: &Batch, cfg: &AgentConfig) -> Result<Losses, NeuralError> {
        let n = batch.len() as f64;
        let y = self.critic_targets(batch, cfg);

        let critic_in = self.critic_input(batch.obs.view(), batch.actions.view());
        let (q, cache) = self.critic.forward(critic_in.view());
        let err = &q.column(0) - &y;
        let critic_loss = err.mapv(|e| e * e).sum() / n;
        if !critic_loss.is_finite() {
            return Err(NeuralError::NonFinite);
        }
        let dq = err.mapv(|e| 2.0 * e / n).insert_axis(Axis(1));
        let critic_grads = self.critic.backward(&cache, dq.view());

        let (pi, actor_cache) = self.actor.forward(batch.obs.view());
        let critic_opt_snapshot = (self.critic.clone(), self.critic_opt.clone());
        self.critic_opt.update(&mut self.critic, &critic_grads)?;

        let pi_in = self.critic_input(batch.obs.view(), pi.column(0));
        let (q_pi, pi_cache) = self.critic.forward(pi_in.view());
        let normalized = pi.column(0).mapv(|a| a / self.a_max);
        let actor_loss =
            -q_pi.sum() / n + cfg.action_l2 * normalized.mapv(|a| a * a).sum() / n;
        let through_critic = self
            .critic
            .backward(&pi_cache, Array2::from_elem((batch.len(), 1), -1.0 / n).view());
        let obs_dim = self.obs_dim();
        let mut d_pi = through_critic.input.slice(s![.., obs_dim..obs_dim + 1]).mapv(|g| g / self.a_max);
        if cfg.action_l2 != 0.0 {
            for (d, a) in d_pi.column_mut(0).iter_mut().zip(normalized.iter()) {
                *d += cfg.action_l2 * 2.0 * a / (n * self.a_max);
            }
        }
        let actor_grads = self.actor.backward(&actor_cache, d_pi.view());
        if !actor_loss.is_finite() {
            (self.critic, self.critic_opt) = critic_opt_snapshot;
            return Err(NeuralError::NonFinite);
        }
        if let Err(e) = self.actor_opt.update(&mut self.actor, &actor_grads) {
            (self.critic, self.critic_opt) = critic_opt_snapshot;
            return Err(e);
        }

        self.actor_target.soft_update(&self.actor, cfg.tau);
        self.critic_target.soft_update(&self.critic, cfg.tau);
        Ok(Losses {
            critic: critic_loss,
            actor: actor_loss,
            mean_q: q.mean().unwrap_or(0.0),
        })
    }

    /// Critic value of a single observation/action pair.
    pub fn q_value(&self, obs: &[f64], action: f64) -> f64 {
        let mut x = obs.to_vec();
        x.push(action / self.a_max);
        self.critic.predict_one(&x)[0]
    }
}
