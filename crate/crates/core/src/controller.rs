//! Force/motion command composition and a full-information reference
//! controller used to validate the simulator without any learning.

use serde::Serialize;

use crate::env::{EnvConfig, EnvError, EnvState, Observation, StepInfo};
use crate::sim::{self, ArmState, ContactState, SimConfig, MOTION_JOINT, POLICY_JOINT};
use crate::trainer::Policy;

/// Accumulated force-control velocity on the policy joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub fc_velocity: f64,
    pub a_max: f64,
    pub fc_limit: f64,
}

impl ControllerState {
    pub fn new(a_max: f64, fc_limit: f64) -> Self {
        Self {
            fc_velocity: 0.0,
            a_max,
            fc_limit,
        }
    }
}

/// Adds the policy's velocity offset to the previous force-control velocity
/// and superimposes the result on the motion command of the policy joint.
///
/// The action is used as given; callers clip it to `a_max` beforehand.
pub fn compose_command(motion_cmd: [f64; 2], ctl: ControllerState, action: f64) -> ([f64; 2], ControllerState) {
    let fc_velocity = (ctl.fc_velocity + action).clamp(-ctl.fc_limit, ctl.fc_limit);
    let mut cmd = motion_cmd;
    cmd[POLICY_JOINT] += fc_velocity;
    (cmd, ControllerState { fc_velocity, ..ctl })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleAction {
    pub action: f64,
    pub singular: bool,
}

/// Gains below this fraction of the maximal lever (`k * L2`) count as singular.
pub const ORACLE_SINGULAR_TOL: f64 = 0.02;

/// Full-information controller: knows the contact point, normal, stiffness
/// and the motion command, and picks the policy-joint velocity that makes the
/// force approach `goal` at rate `kp`.
pub fn analytical_oracle_action(
    contact: &ContactState,
    q: [f64; 2],
    cfg: &SimConfig,
    ctl: &ControllerState,
    motion_cmd: [f64; 2],
    goal: f64,
    kp: f64,
) -> OracleAction {
    if !contact.in_contact {
        return OracleAction {
            action: 0.0,
            singular: true,
        };
    }
    let policy_gain = sim::force_gain(contact, q, cfg, POLICY_JOINT);
    if policy_gain.abs() < ORACLE_SINGULAR_TOL * cfg.contact_stiffness * cfg.link_lengths[1] {
        return OracleAction {
            action: 0.0,
            singular: true,
        };
    }
    let motion_rate = sim::force_gain(contact, q, cfg, MOTION_JOINT) * motion_cmd[MOTION_JOINT]
        + policy_gain * motion_cmd[POLICY_JOINT];
    let desired_rate = kp * (goal - contact.normal_force);
    let target = (desired_rate - motion_rate) / policy_gain;
    let action = (target.clamp(-ctl.fc_limit, ctl.fc_limit) - ctl.fc_velocity).clamp(-ctl.a_max, ctl.a_max);
    OracleAction {
        action,
        singular: false,
    }
}

/// Everything a controller may look at before acting. Learned policies use
/// only `observation`; the oracle reads the plant directly.
pub struct ControlContext<'a> {
    pub observation: &'a Observation,
    pub obs_vector: &'a [f64],
    pub contact: &'a ContactState,
    pub arm: &'a ArmState,
    pub sim: &'a SimConfig,
    pub ctl: &'a ControllerState,
    pub motion_cmd: [f64; 2],
    pub goal: f64,
}

pub trait ForceController {
    fn act(&mut self, ctx: &ControlContext<'_>) -> f64;
}

/// [`analytical_oracle_action`] as a [`ForceController`].
#[derive(Debug, Clone)]
pub struct OracleController {
    pub kp: f64,
    pub singular_steps: usize,
}

impl OracleController {
    pub fn new(kp: f64) -> Self {
        Self { kp, singular_steps: 0 }
    }
}

impl Default for OracleController {
    fn default() -> Self {
        Self::new(2.0)
    }
}

impl ForceController for OracleController {
    fn act(&mut self, ctx: &ControlContext<'_>) -> f64 {
        let out = analytical_oracle_action(
            ctx.contact,
            ctx.arm.q,
            ctx.sim,
            ctx.ctl,
            ctx.motion_cmd,
            ctx.goal,
            self.kp,
        );
        if out.singular {
            self.singular_steps += 1;
        }
        out.action
    }
}

impl<F: FnMut(&[f64]) -> f64> ForceController for F {
    fn act(&mut self, ctx: &ControlContext<'_>) -> f64 {
        self(ctx.obs_vector)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub time: f64,
    pub q0: f64,
    pub q1: f64,
    pub f_n: f64,
    pub goal: f64,
    pub action: f64,
    /// NaN once contact is lost.
    pub contact_angle: f64,
    pub in_contact: bool,
    pub penetration: f64,
    /// Tangential displacement of the contact point on the end-effector side
    /// during this step, along the surface tangent.
    pub tangential_motion: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn forces(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.f_n).collect()
    }

    pub fn broke_contact(&self) -> bool {
        self.records.iter().any(|r| !r.in_contact)
    }

    pub const CSV_HEADER: &'static str = "step,time,q0,q1,f_n,goal,action,contact_angle,in_contact";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.step, r.time, r.q0, r.q1, r.f_n, r.goal, r.action, r.contact_angle, r.in_contact as u8
            ));
        }
        out
    }
}

/// Runs the closed loop for `steps` steps (or until contact breaks), with a
/// time-indexed motion command and goal. Goal changes carry the history and
/// the accumulated force-control velocity over.
pub fn run_controlled(
    controller: &mut dyn ForceController,
    mut state: EnvState,
    motion_profile: &dyn Fn(usize) -> [f64; 2],
    goal_profile: &dyn Fn(usize) -> f64,
    steps: usize,
) -> Result<Trajectory, EnvError> {
    state.extend_horizon(steps);
    let mut trajectory = Trajectory::default();
    for t in 0..steps {
        state.set_motion_command(motion_profile(t));
        state.set_goal(goal_profile(t));
        let action = control_action(controller, &state);
        let outcome = state.step(action)?;
        trajectory.records.push(record_from(&state, t, &outcome.info));
        if !outcome.info.in_contact {
            break;
        }
    }
    Ok(trajectory)
}

pub(crate) fn record_from(state: &EnvState, t: usize, info: &StepInfo) -> TrajectoryRecord {
    let cfg = &state.config().sim;
    let arm = state.arm();
    let contact = state.contact();
    let pose = sim::forward_kinematics(arm.q, cfg);
    TrajectoryRecord {
        step: t,
        time: (t + 1) as f64 * cfg.dt,
        q0: arm.q[0],
        q1: arm.q[1],
        f_n: contact.normal_force,
        goal: state.goal(),
        action: info.action,
        contact_angle: sim::contact_sensor_angle(contact, &pose).unwrap_or(f64::NAN),
        in_contact: contact.in_contact,
        penetration: contact.penetration,
        tangential_motion: info.tangential_motion,
    }
}

/// Queries `controller` with the full context of `state`.
pub fn control_action(controller: &mut dyn ForceController, state: &EnvState) -> f64 {
    let observation = state.observation();
    let obs_vector = observation.to_vector(state.config());
    let ctl = state.controller_state();
    controller.act(&ControlContext {
        observation: &observation,
        obs_vector: &obs_vector,
        contact: state.contact(),
        arm: state.arm(),
        sim: &state.config().sim,
        ctl: &ctl,
        motion_cmd: state.motion_command(),
        goal: state.goal(),
    })
}

/// Adapts an observation-only [`Policy`] to the controller interface.
pub struct PolicyController<'a, P: ?Sized>(pub &'a P);

impl<P: Policy + ?Sized> ForceController for PolicyController<'_, P> {
    fn act(&mut self, ctx: &ControlContext<'_>) -> f64 {
        self.0.act(ctx.obs_vector)
    }
}

/// Closed-loop oracle run from explicit start parameters; a convenience used
/// by the experiments and the acceptance gate.
pub fn oracle_run(
    cfg: &EnvConfig,
    start: crate::env::DrSample,
    kp: f64,
    steps: usize,
) -> Result<(Trajectory, usize), EnvError> {
    let state = EnvState::from_sample(cfg, start)?;
    let motion = [start.motion_velocity, 0.0];
    let goal = start.goal;
    let mut oracle = OracleController::new(kp);
    let traj = run_controlled(&mut oracle, state, &|_| motion, &|_| goal, steps)?;
    Ok((traj, oracle.singular_steps))
}
