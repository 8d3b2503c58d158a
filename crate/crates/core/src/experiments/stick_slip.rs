use serde::{Deserialize, Serialize};

use crate::controller::{control_action, record_from, ForceController, Trajectory};
use crate::env::{DrSample, EnvConfig, EnvError, EnvState};
use crate::sim::Vec2;

/// A box resting on the ground whose top face is the contact surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoxModel {
    /// Weight, N.
    pub weight: f64,
    /// Friction coefficient between end-effector and box.
    pub mu_contact: f64,
    /// Friction coefficient between box and ground.
    pub mu_ground: f64,
}

impl Default for BoxModel {
    fn default() -> Self {
        Self {
            weight: 5.0,
            mu_contact: 0.6,
            mu_ground: 0.2,
        }
    }
}

impl BoxModel {
    /// Quasi-static rule: the contact can transmit `mu_contact * f_n`; the box
    /// moves when that exceeds the ground friction `mu_ground * (W + f_n)`.
    pub fn drags_box(&self, f_n: f64) -> bool {
        self.mu_contact * f_n > self.mu_ground * (self.weight + f_n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContactMode {
    /// No tangential motion this step.
    Stick,
    SlipAtContact,
    BoxSliding,
    Separated,
}

impl ContactMode {
    pub fn label(self) -> &'static str {
        match self {
            ContactMode::Stick => "stick",
            ContactMode::SlipAtContact => "slip-at-contact",
            ContactMode::BoxSliding => "box-sliding",
            ContactMode::Separated => "separated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoConfig {
    pub box_model: BoxModel,
    pub goal: f64,
    /// Sensor contact angle, radians.
    pub contact_angle: f64,
    pub initial_force: f64,
    /// Motion-joint velocity during the sliding phase, rad/s.
    pub motion_velocity: f64,
    /// Steps with the motion joint at rest before sliding starts.
    pub settle_steps: usize,
    pub motion_steps: usize,
    /// Tangential displacement below this counts as no motion, m.
    pub motion_epsilon: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            box_model: BoxModel::default(),
            goal: 1.0,
            contact_angle: 45f64.to_radians(),
            initial_force: 3.0,
            motion_velocity: 0.01,
            settle_steps: 15,
            motion_steps: 40,
            motion_epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoStep {
    pub mode: ContactMode,
    /// Box displacement along the surface tangent since the start, m.
    pub box_position: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoResult {
    pub config: DemoConfig,
    pub trajectory: Trajectory,
    pub steps: Vec<DemoStep>,
}

impl DemoResult {
    pub fn box_displacement(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.box_position)
    }

    /// Re-derives every label from the logged force and motion.
    pub fn labels_consistent(&self) -> bool {
        self.trajectory.records.iter().zip(&self.steps).all(|(r, s)| {
            s.mode == classify(&self.config, r.in_contact, r.f_n, r.tangential_motion)
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,time,f_n,goal,action,tangential_motion,mode,box_position\n");
        for (r, s) in self.trajectory.records.iter().zip(&self.steps) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.step,
                r.time,
                r.f_n,
                r.goal,
                r.action,
                r.tangential_motion,
                s.mode.label(),
                s.box_position
            ));
        }
        out
    }
}

fn classify(cfg: &DemoConfig, in_contact: bool, f_n: f64, tangential: f64) -> ContactMode {
    if !in_contact {
        ContactMode::Separated
    } else if tangential.abs() <= cfg.motion_epsilon {
        ContactMode::Stick
    } else if cfg.box_model.drags_box(f_n) {
        ContactMode::BoxSliding
    } else {
        ContactMode::SlipAtContact
    }
}

/// Holds the goal force while the motion joint drags the end-effector along
/// the box. When the box slides it follows the end-effector's tangential
/// displacement; otherwise it stays put and the contact slips.
pub fn stick_slip_demo(
    controller: &mut dyn ForceController,
    env_cfg: &EnvConfig,
    cfg: DemoConfig,
) -> Result<DemoResult, EnvError> {
    let start = DrSample {
        contact_angle: cfg.contact_angle,
        initial_force: cfg.initial_force,
        goal: cfg.goal,
        motion_velocity: 0.0,
    };
    let mut state = EnvState::from_sample(env_cfg, start)?;
    let total = cfg.settle_steps + cfg.motion_steps;
    state.extend_horizon(total);
    let mut trajectory = Trajectory::default();
    let mut steps = Vec::with_capacity(total);
    let mut box_position = 0.0;
    for t in 0..total {
        let motion = if t < cfg.settle_steps { 0.0 } else { cfg.motion_velocity };
        state.set_motion_command([motion, 0.0]);
        let action = control_action(controller, &state);
        let outcome = state.step(action)?;
        let record = record_from(&state, t, &outcome.info);
        let mode = classify(&cfg, record.in_contact, record.f_n, record.tangential_motion);
        if mode == ContactMode::BoxSliding {
            let n = state.surface().normal;
            let tangent = Vec2::new(-n.y, n.x);
            state.shift_surface(tangent * record.tangential_motion);
            box_position += record.tangential_motion;
        }
        trajectory.records.push(record);
        steps.push(DemoStep { mode, box_position });
        if outcome.terminated {
            break;
        }
    }
    Ok(DemoResult {
        config: cfg,
        trajectory,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::OracleController;

    #[test]
    fn quasi_static_thresholds() {
        let b = BoxModel::default();
        // 0.6 * 1 = 0.6 < 0.2 * 6 = 1.2
        assert!(!b.drags_box(1.0));
        // 0.6 * 5 = 3.0 > 0.2 * 10 = 2.0
        assert!(b.drags_box(5.0));
        // threshold 0.2 W / (0.6 - 0.2) = 2.5 N
        assert!(!b.drags_box(2.5));
        assert!(b.drags_box(2.5 + 1e-9));
    }

    fn run(goal: f64) -> DemoResult {
        let cfg = DemoConfig {
            goal,
            ..DemoConfig::default()
        };
        stick_slip_demo(&mut OracleController::default(), &EnvConfig::default(), cfg).unwrap()
    }

    #[test]
    fn low_force_slips_and_leaves_box() {
        let r = run(1.0);
        assert!(r.labels_consistent());
        assert_eq!(r.box_displacement(), 0.0);
        assert!(r.steps.iter().any(|s| s.mode == ContactMode::SlipAtContact));
        assert!(r.steps.iter().all(|s| s.mode != ContactMode::BoxSliding));
    }

    #[test]
    fn high_force_drags_box() {
        let r = run(5.0);
        assert!(r.labels_consistent());
        assert!(r.box_displacement().abs() > 0.01, "{}", r.box_displacement());
        let moving = &r.steps[r.config.settle_steps..];
        assert!(moving.iter().all(|s| s.mode == ContactMode::BoxSliding));
    }

    #[test]
    fn no_tangential_motion_is_stick() {
        let cfg = DemoConfig {
            goal: 3.0,
            initial_force: 3.0,
            motion_velocity: 0.0,
            ..DemoConfig::default()
        };
        let r = stick_slip_demo(&mut OracleController::default(), &EnvConfig::default(), cfg).unwrap();
        assert!(r.steps.iter().all(|s| s.mode == ContactMode::Stick));
        assert_eq!(r.box_displacement(), 0.0);
    }
}
