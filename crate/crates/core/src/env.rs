//! Training environment: domain-randomized reset, interaction-history
//! observations, force-error rewards and contact-break termination.
//!
//! Observation layout (flattened, oldest history entry first):
//!
//! ```text
//! [ a_{c-N}/a_max, f/s, df/s, ddf/s,  ...,  a_{c-1}/a_max, f/s, df/s, ddf/s,  goal/s ]
//! ```
//!
//! where `s` is `force_scale` and masked features are omitted. Each history
//! entry pairs an action with the force feature measured *after* it.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{compose_command, ControllerState};
use crate::error::ConfigError;
use crate::sim::{self, ArmState, ContactState, SimConfig, SurfaceModel, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceFeature {
    pub f_n: f64,
    pub d_f: f64,
    pub dd_f: f64,
}

impl ForceFeature {
    pub fn at_rest(f_n: f64) -> Self {
        Self { f_n, d_f: 0.0, dd_f: 0.0 }
    }
}

pub fn update_features(prev: ForceFeature, f_new: f64) -> ForceFeature {
    let d_f = f_new - prev.f_n;
    ForceFeature {
        f_n: f_new,
        d_f,
        dd_f: d_f - prev.d_f,
    }
}

/// Which force features the policy sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMask {
    pub f_n: bool,
    pub d_f: bool,
    pub dd_f: bool,
}

impl FeatureMask {
    pub const ALL: Self = Self {
        f_n: true,
        d_f: true,
        dd_f: true,
    };
    pub const NO_DDF: Self = Self {
        f_n: true,
        d_f: true,
        dd_f: false,
    };

    pub fn count(&self) -> usize {
        self.f_n as usize + self.d_f as usize + self.dd_f as usize
    }
}

impl Default for FeatureMask {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Left,
    Right,
}

impl Region {
    pub fn of_angle(angle: f64) -> Self {
        if angle < 0.0 {
            Region::Left
        } else {
            Region::Right
        }
    }

    pub fn index(self) -> usize {
        match self {
            Region::Left => 0,
            Region::Right => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainRandomization {
    /// Sensor contact angle interval of the left region, radians, both < 0.
    pub left_contact_angle: [f64; 2],
    /// Sensor contact angle interval of the right region, radians, both > 0.
    pub right_contact_angle: [f64; 2],
    pub initial_force: [f64; 2],
    pub goal_force: [f64; 2],
    pub motion_joint_velocity: [f64; 2],
}

impl Default for DomainRandomization {
    fn default() -> Self {
        let (lo, hi) = (30f64.to_radians(), 60f64.to_radians());
        Self {
            left_contact_angle: [-hi, -lo],
            right_contact_angle: [lo, hi],
            initial_force: [1.0, 4.0],
            goal_force: [1.0, 5.0],
            motion_joint_velocity: [-0.01, 0.01],
        }
    }
}

impl DomainRandomization {
    /// Restricts contact angles to one region.
    pub fn only(mut self, region: Region) -> Self {
        match region {
            Region::Left => self.right_contact_angle = self.left_contact_angle,
            Region::Right => self.left_contact_angle = self.right_contact_angle,
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// History length `N`.
    pub history_len: usize,
    /// Steps per rollout `T`.
    pub horizon: usize,
    /// Bound on a single velocity offset, rad/s.
    pub a_max: f64,
    /// Bound on the accumulated force-control velocity, rad/s.
    pub fc_limit: f64,
    /// Break-contact penalty magnitude `M`.
    pub break_penalty: f64,
    pub force_scale: f64,
    pub features: FeatureMask,
    /// Arm configuration at reset.
    pub reference_pose: [f64; 2],
    pub dr: DomainRandomization,
    /// Carried separately in configuration files.
    #[serde(skip)]
    pub sim: SimConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            history_len: 3,
            horizon: 60,
            a_max: 0.02,
            fc_limit: 0.05,
            break_penalty: 50.0,
            force_scale: 2.0,
            features: FeatureMask::ALL,
            reference_pose: [PI / 2.0, -PI / 2.0],
            dr: DomainRandomization::default(),
            sim: SimConfig::default(),
        }
    }
}

fn check_interval(key: &str, iv: [f64; 2]) -> Result<(), ConfigError> {
    if !(iv[0].is_finite() && iv[1].is_finite() && iv[0] <= iv[1]) {
        return Err(ConfigError::invalid(key, format!("empty or non-finite interval {iv:?}")));
    }
    Ok(())
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate()?;
        if self.history_len < 1 {
            return Err(ConfigError::invalid("env.history_len", "must be >= 1"));
        }
        if self.horizon < self.history_len {
            return Err(ConfigError::invalid("env.horizon", "must be >= history_len"));
        }
        if !(self.a_max > 0.0) {
            return Err(ConfigError::invalid("env.a_max", "must be > 0"));
        }
        if self.a_max > self.fc_limit {
            return Err(ConfigError::invalid(
                "env.a_max",
                format!("a_max ({}) must not exceed fc_limit ({})", self.a_max, self.fc_limit),
            ));
        }
        if self.fc_limit > self.sim.joint_velocity_limit {
            return Err(ConfigError::invalid(
                "env.fc_limit",
                format!(
                    "fc_limit ({}) must not exceed sim.joint_velocity_limit ({})",
                    self.fc_limit, self.sim.joint_velocity_limit
                ),
            ));
        }
        if !(self.force_scale > 0.0) {
            return Err(ConfigError::invalid("env.force_scale", "must be > 0"));
        }
        if self.features.count() == 0 {
            return Err(ConfigError::invalid("env.features", "at least one feature must be observed"));
        }
        let dr = &self.dr;
        check_interval("env.dr.left_contact_angle", dr.left_contact_angle)?;
        check_interval("env.dr.right_contact_angle", dr.right_contact_angle)?;
        check_interval("env.dr.initial_force", dr.initial_force)?;
        check_interval("env.dr.goal_force", dr.goal_force)?;
        check_interval("env.dr.motion_joint_velocity", dr.motion_joint_velocity)?;
        if !(dr.left_contact_angle[0] > -PI && dr.left_contact_angle[1] < 0.0) {
            return Err(ConfigError::invalid("env.dr.left_contact_angle", "must lie inside (-pi, 0)"));
        }
        if !(dr.right_contact_angle[0] > 0.0 && dr.right_contact_angle[1] < PI) {
            return Err(ConfigError::invalid("env.dr.right_contact_angle", "must lie inside (0, pi)"));
        }
        let max_force = self.sim.contact_stiffness * self.sim.max_penetration;
        if !(dr.initial_force[0] > 0.0 && dr.initial_force[1] < max_force) {
            return Err(ConfigError::invalid(
                "env.dr.initial_force",
                format!("must lie inside (0, {max_force}) N"),
            ));
        }
        if dr.goal_force[0] < 0.0 {
            return Err(ConfigError::invalid("env.dr.goal_force", "must be non-negative"));
        }
        if !(self.break_penalty > dr.goal_force[1]) {
            return Err(ConfigError::invalid(
                "env.break_penalty",
                format!("must exceed the largest goal force ({})", dr.goal_force[1]),
            ));
        }
        if dr.motion_joint_velocity[0].abs().max(dr.motion_joint_velocity[1].abs()) > self.sim.joint_velocity_limit {
            return Err(ConfigError::invalid(
                "env.dr.motion_joint_velocity",
                "exceeds sim.joint_velocity_limit",
            ));
        }
        Ok(())
    }

    /// Length of the flattened observation vector.
    pub fn obs_dim(&self) -> usize {
        self.history_len * (1 + self.features.count()) + 1
    }
}

pub fn compute_reward(f_n: f64, goal: f64, in_contact: bool, break_penalty: f64) -> f64 {
    if in_contact {
        -(f_n - goal).abs()
    } else {
        -break_penalty
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub action: f64,
    pub feature: ForceFeature,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    /// Oldest first.
    pub history: Vec<HistoryEntry>,
    pub goal: f64,
    pub mask: FeatureMask,
}

impl Observation {
    pub fn to_vector(&self, cfg: &EnvConfig) -> Vec<f64> {
        build_observation(&self.history, self.goal, self.mask, cfg.force_scale, cfg.a_max)
    }
}

pub fn build_observation<'a>(
    history: impl IntoIterator<Item = &'a HistoryEntry>,
    goal: f64,
    mask: FeatureMask,
    force_scale: f64,
    a_max: f64,
) -> Vec<f64> {
    let mut out = Vec::new();
    for entry in history {
        out.push(entry.action / a_max);
        if mask.f_n {
            out.push(entry.feature.f_n / force_scale);
        }
        if mask.d_f {
            out.push(entry.feature.d_f / force_scale);
        }
        if mask.dd_f {
            out.push(entry.feature.dd_f / force_scale);
        }
    }
    out.push(goal / force_scale);
    out
}

/// One draw of the randomized reset parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrSample {
    pub contact_angle: f64,
    pub initial_force: f64,
    pub goal: f64,
    pub motion_velocity: f64,
}

impl DrSample {
    pub fn draw<R: Rng + ?Sized>(dr: &DomainRandomization, rng: &mut R) -> Self {
        let angle_range = if rng.random_bool(0.5) {
            dr.left_contact_angle
        } else {
            dr.right_contact_angle
        };
        let contact_angle = uniform(rng, angle_range);
        let initial_force = uniform(rng, dr.initial_force);
        let goal = uniform(rng, dr.goal_force);
        let motion_velocity = uniform(rng, dr.motion_joint_velocity);
        Self {
            contact_angle,
            initial_force,
            goal,
            motion_velocity,
        }
    }

    pub fn region(&self) -> Region {
        Region::of_angle(self.contact_angle)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    range[0] + (range[1] - range[0]) * rng.random::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum EnvError {
    #[error("cannot step a terminated episode")]
    EpisodeTerminated,
    #[error("reset did not produce a contact")]
    NoInitialContact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// The action actually applied, after clipping.
    pub action: f64,
    pub in_contact: bool,
    pub contact_broken: bool,
    pub truncated: bool,
    pub f_n: f64,
    /// Tangential travel of the end-effector at the contact during the step.
    pub tangential_motion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    cfg: EnvConfig,
    arm: ArmState,
    surface: SurfaceModel,
    contact: ContactState,
    ctl: ControllerState,
    motion_cmd: [f64; 2],
    goal: f64,
    feature: ForceFeature,
    history: VecDeque<HistoryEntry>,
    steps: usize,
    horizon: usize,
    terminated: bool,
    sample: DrSample,
}

/// Samples the domain randomization and places the arm in contact.
pub fn reset<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Result<(EnvState, Observation, Region), EnvError> {
    let sample = DrSample::draw(&cfg.dr, rng);
    let state = EnvState::from_sample(cfg, sample)?;
    let obs = state.observation();
    Ok((state, obs, sample.region()))
}

impl EnvState {
    /// Builds the reset state for explicit randomization values: the arm sits
    /// at the reference pose and a half-plane is placed so the contact lies at
    /// `contact_angle` on the sensor with penetration `initial_force / k`.
    pub fn from_sample(cfg: &EnvConfig, sample: DrSample) -> Result<Self, EnvError> {
        let sim_cfg = &cfg.sim;
        let arm = ArmState::at(cfg.reference_pose);
        let pose = sim::forward_kinematics(arm.q, sim_cfg);
        let heading = pose.orientation + sample.contact_angle;
        let toward_contact = Vec2::new(heading.cos(), heading.sin());
        let depth = sample.initial_force / sim_cfg.contact_stiffness;
        let surface = SurfaceModel {
            anchor: pose.center + (sim_cfg.ee_radius - depth) * toward_contact,
            normal: -toward_contact,
        };
        let contact = sim::detect_contact(&pose, &surface, sim_cfg);
        if !contact.in_contact {
            return Err(EnvError::NoInitialContact);
        }
        let feature = ForceFeature::at_rest(contact.normal_force);
        let history = std::iter::repeat_n(
            HistoryEntry {
                action: 0.0,
                feature,
            },
            cfg.history_len,
        )
        .collect();
        Ok(Self {
            cfg: cfg.clone(),
            arm,
            surface,
            contact,
            ctl: ControllerState::new(cfg.a_max, cfg.fc_limit),
            motion_cmd: [sample.motion_velocity, 0.0],
            goal: sample.goal,
            feature,
            history,
            steps: 0,
            horizon: cfg.horizon,
            terminated: false,
            sample,
        })
    }

    pub fn observation(&self) -> Observation {
        Observation {
            history: self.history.iter().copied().collect(),
            goal: self.goal,
            mask: self.cfg.features,
        }
    }

    pub fn obs_vector(&self) -> Vec<f64> {
        build_observation(&self.history, self.goal, self.cfg.features, self.cfg.force_scale, self.cfg.a_max)
    }

    pub fn step(&mut self, action: f64) -> Result<StepOutcome, EnvError> {
        if self.terminated {
            return Err(EnvError::EpisodeTerminated);
        }
        let action = action.clamp(-self.cfg.a_max, self.cfg.a_max);
        let (cmd, ctl) = compose_command(self.motion_cmd, self.ctl, action);
        self.ctl = ctl;
        let before = sim::forward_kinematics(self.arm.q, &self.cfg.sim).center;
        let (arm, contact) = sim::step(&self.arm, cmd, &self.surface, &self.cfg.sim);
        let after = sim::forward_kinematics(arm.q, &self.cfg.sim).center;
        let tangent = Vec2::new(-self.surface.normal.y, self.surface.normal.x);
        self.arm = arm;
        self.contact = contact;
        self.feature = update_features(self.feature, contact.normal_force);
        self.history.pop_front();
        self.history.push_back(HistoryEntry {
            action,
            feature: self.feature,
        });
        self.steps += 1;
        let reward = compute_reward(contact.normal_force, self.goal, contact.in_contact, self.cfg.break_penalty);
        let contact_broken = !contact.in_contact;
        let truncated = !contact_broken && self.steps >= self.horizon;
        self.terminated = contact_broken || truncated;
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            terminated: self.terminated,
            info: StepInfo {
                action,
                in_contact: contact.in_contact,
                contact_broken,
                truncated,
                f_n: contact.normal_force,
                tangential_motion: tangent.dot(&(after - before)),
            },
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }
    pub fn arm(&self) -> &ArmState {
        &self.arm
    }
    pub fn contact(&self) -> &ContactState {
        &self.contact
    }
    pub fn surface(&self) -> &SurfaceModel {
        &self.surface
    }
    pub fn controller_state(&self) -> ControllerState {
        self.ctl
    }
    pub fn goal(&self) -> f64 {
        self.goal
    }
    pub fn feature(&self) -> ForceFeature {
        self.feature
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn is_terminated(&self) -> bool {
        self.terminated
    }
    pub fn sample(&self) -> &DrSample {
        &self.sample
    }
    pub fn region(&self) -> Region {
        self.sample.region()
    }
    pub fn motion_command(&self) -> [f64; 2] {
        self.motion_cmd
    }

    pub fn set_goal(&mut self, goal: f64) {
        self.goal = goal;
    }

    pub fn set_motion_command(&mut self, cmd: [f64; 2]) {
        self.motion_cmd = cmd;
    }

    /// Moves the surface (and whatever it belongs to) by `offset`.
    pub fn shift_surface(&mut self, offset: Vec2) {
        self.surface = self.surface.translated(offset);
    }

    /// Allows exactly `horizon` steps in total, overriding the configured `T`.
    pub fn extend_horizon(&mut self, horizon: usize) {
        self.horizon = horizon;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(angle: f64, force: f64, goal: f64) -> DrSample {
        DrSample {
            contact_angle: angle,
            initial_force: force,
            goal,
            motion_velocity: 0.0,
        }
    }

    #[test]
    fn feature_differences() {
        let a = update_features(ForceFeature::at_rest(3.0), 3.5);
        assert_eq!(a, ForceFeature { f_n: 3.5, d_f: 0.5, dd_f: 0.5 });
        let b = update_features(a, 3.5);
        assert_eq!(b, ForceFeature { f_n: 3.5, d_f: 0.0, dd_f: -0.5 });
        let mut c = ForceFeature::at_rest(2.0);
        for _ in 0..10 {
            c = update_features(c, 2.0);
        }
        assert_eq!(c, ForceFeature::at_rest(2.0));
    }

    #[test]
    fn reward_cases() {
        assert_eq!(compute_reward(5.0, 5.0, true, 10.0), 0.0);
        assert_eq!(compute_reward(3.0, 5.0, true, 10.0), -2.0);
        assert_eq!(compute_reward(3.0, 5.0, false, 10.0), -10.0);
        assert_eq!(compute_reward(0.0, 0.0, false, 7.0), -7.0);
    }

    #[test]
    fn observation_layout() {
        let history = [HistoryEntry {
            action: 0.0,
            feature: ForceFeature::at_rest(3.0),
        }];
        let v = build_observation(&history, 5.0, FeatureMask::ALL, 10.0, 0.02);
        assert_eq!(v, vec![0.0, 0.3, 0.0, 0.0, 0.5]);
        assert_eq!(build_observation(&history, 5.0, FeatureMask::NO_DDF, 10.0, 0.02).len(), 4);
        let three = [history[0]; 3];
        assert_eq!(build_observation(&three, 5.0, FeatureMask::ALL, 10.0, 0.02).len(), 13);
    }

    #[test]
    fn reset_reproduces_initial_force() {
        let cfg = EnvConfig::default();
        let state = EnvState::from_sample(&cfg, sample(-0.4, 3.0, 4.0)).unwrap();
        assert_abs_diff_eq!(state.contact().normal_force, 3.0, epsilon = 1e-9);
        let obs = state.observation();
        assert_eq!(obs.history.len(), cfg.history_len);
        for entry in &obs.history {
            assert_eq!(entry.action, 0.0);
            assert_eq!(entry.feature.d_f, 0.0);
            assert_eq!(entry.feature.dd_f, 0.0);
        }
        let pose = sim::forward_kinematics(state.arm().q, &cfg.sim);
        assert_abs_diff_eq!(
            sim::contact_sensor_angle(state.contact(), &pose).unwrap(),
            -0.4,
            epsilon = 1e-12
        );
    }

    #[test]
    fn region_follows_angle_sign() {
        assert_eq!(sample(-0.6, 2.0, 2.0).region(), Region::Left);
        assert_eq!(sample(0.6, 2.0, 2.0).region(), Region::Right);
    }

    #[test]
    fn seeded_resets_match() {
        let cfg = EnvConfig::default();
        let a = reset(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = reset(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn zero_action_at_equilibrium_keeps_force() {
        let cfg = EnvConfig::default();
        let mut state = EnvState::from_sample(&cfg, sample(0.5, 3.0, 5.0)).unwrap();
        let out = state.step(0.0).unwrap();
        assert_abs_diff_eq!(out.info.f_n, 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(out.reward, -2.0, epsilon = 1e-9);
        assert!(!out.terminated);
    }

    #[test]
    fn pulling_away_breaks_contact_with_penalty() {
        let cfg = EnvConfig::default();
        // right region: positive policy-joint velocity presses, negative releases
        let mut state = EnvState::from_sample(&cfg, sample(0.8, 1.0, 3.0)).unwrap();
        let mut last = None;
        for _ in 0..cfg.horizon {
            let out = state.step(-1.0).unwrap();
            assert_eq!(out.info.action, -cfg.a_max);
            let done = out.terminated;
            last = Some(out);
            if done {
                break;
            }
        }
        let last = last.unwrap();
        assert!(last.info.contact_broken);
        assert_eq!(last.reward, -cfg.break_penalty);
        assert!(state.step(0.0).is_err());
    }

    #[test]
    fn episode_truncates_at_horizon() {
        let cfg = EnvConfig::default();
        let mut state = EnvState::from_sample(&cfg, sample(0.5, 3.0, 3.0)).unwrap();
        for t in 0..cfg.horizon {
            let out = state.step(0.0).unwrap();
            assert_eq!(out.terminated, t + 1 == cfg.horizon);
        }
        assert_eq!(state.step(0.0), Err(EnvError::EpisodeTerminated));
    }

    #[test]
    fn history_holds_recent_actions_oldest_first() {
        let cfg = EnvConfig::default();
        let mut state = EnvState::from_sample(&cfg, sample(0.5, 3.0, 3.0)).unwrap();
        let actions = [0.001, -0.002, 0.003, 0.004];
        let mut forces = Vec::new();
        for a in actions {
            forces.push(state.step(a).unwrap().info.f_n);
        }
        let obs = state.observation();
        let tail: Vec<f64> = obs.history.iter().map(|h| h.action).collect();
        assert_eq!(tail, actions[1..].to_vec());
        let tail_f: Vec<f64> = obs.history.iter().map(|h| h.feature.f_n).collect();
        assert_eq!(tail_f, forces[1..].to_vec());
        assert_eq!(state.obs_vector(), obs.to_vector(&cfg));
    }

    #[test]
    fn validation_catches_bad_bounds() {
        let mut cfg = EnvConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.a_max = 0.06;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default();
        cfg.break_penalty = 4.0;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default();
        cfg.dr.left_contact_angle = [-0.1, 0.2];
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default();
        cfg.horizon = 2;
        cfg.history_len = 3;
        assert!(cfg.validate().is_err());
    }
}
