//! Quasi-static planar simulator: a two-link arm whose disc end-effector
//! presses against a fixed half-plane through a lumped linear spring.
//!
//! Joint 0 is the motion joint, joint 1 the policy joint. Everything here is
//! a pure function of value types.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::ConfigError;

pub type Vec2 = Vector2<f64>;

/// Index of the joint driven by the motion controller.
pub const MOTION_JOINT: usize = 0;
/// Index of the joint driven by the force controller.
pub const POLICY_JOINT: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Link lengths `[L1, L2]` in meters.
    pub link_lengths: [f64; 2],
    pub ee_radius: f64,
    /// Lumped contact stiffness in N/m.
    pub contact_stiffness: f64,
    pub dt: f64,
    pub base_position: [f64; 2],
    /// Per-joint absolute velocity bound in rad/s.
    pub joint_velocity_limit: f64,
    pub max_penetration: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            link_lengths: [0.4, 0.4],
            ee_radius: 0.05,
            contact_stiffness: 2000.0,
            dt: 0.2,
            base_position: [0.0, 0.0],
            joint_velocity_limit: 0.05,
            max_penetration: 0.01,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("sim.link_lengths[0]", self.link_lengths[0]),
            ("sim.link_lengths[1]", self.link_lengths[1]),
            ("sim.ee_radius", self.ee_radius),
            ("sim.contact_stiffness", self.contact_stiffness),
            ("sim.dt", self.dt),
            ("sim.joint_velocity_limit", self.joint_velocity_limit),
            ("sim.max_penetration", self.max_penetration),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::invalid(key, format!("must be finite and > 0, got {value}")));
            }
        }
        if self.max_penetration >= self.ee_radius {
            return Err(ConfigError::invalid(
                "sim.max_penetration",
                format!("must be smaller than ee_radius ({})", self.ee_radius),
            ));
        }
        if !self.base_position.iter().all(|v| v.is_finite()) {
            return Err(ConfigError::invalid("sim.base_position", "must be finite"));
        }
        Ok(())
    }

    pub fn base(&self) -> Vec2 {
        Vec2::new(self.base_position[0], self.base_position[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArmState {
    pub q: [f64; 2],
    pub q_dot_applied: [f64; 2],
}

impl ArmState {
    pub fn at(q: [f64; 2]) -> Self {
        Self {
            q: [wrap_angle(q[0]), wrap_angle(q[1])],
            q_dot_applied: [0.0; 2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EePose {
    pub center: Vec2,
    /// Direction of the distal axis of link 2, in radians.
    pub orientation: f64,
}

/// A fixed half-plane. `normal` points from the surface into free space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceModel {
    pub anchor: Vec2,
    pub normal: Vec2,
}

impl SurfaceModel {
    /// Builds a surface, normalizing `normal`. Returns `None` for a zero normal.
    pub fn new(anchor: Vec2, normal: Vec2) -> Option<Self> {
        let norm = normal.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return None;
        }
        Some(Self {
            anchor,
            normal: normal / norm,
        })
    }

    /// Translates the surface within its own plane (or off it).
    pub fn translated(&self, offset: Vec2) -> Self {
        Self {
            anchor: self.anchor + offset,
            normal: self.normal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactState {
    pub point: Vec2,
    /// Unit normal, surface to end-effector.
    pub normal: Vec2,
    pub penetration: f64,
    pub normal_force: f64,
    pub in_contact: bool,
}

impl ContactState {
    pub fn separated() -> Self {
        Self {
            point: Vec2::zeros(),
            normal: Vec2::zeros(),
            penetration: 0.0,
            normal_force: 0.0,
            in_contact: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("operation requires an active contact")]
    NotInContact,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let w = angle.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

fn perp(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// World positions of the two joint axes.
pub fn joint_origins(q: [f64; 2], cfg: &SimConfig) -> [Vec2; 2] {
    let base = cfg.base();
    let elbow = base + cfg.link_lengths[0] * Vec2::new(q[0].cos(), q[0].sin());
    [base, elbow]
}

pub fn forward_kinematics(q: [f64; 2], cfg: &SimConfig) -> EePose {
    let [_, elbow] = joint_origins(q, cfg);
    let orientation = q[0] + q[1];
    EePose {
        center: elbow + cfg.link_lengths[1] * Vec2::new(orientation.cos(), orientation.sin()),
        orientation,
    }
}

/// Velocity of a point rigidly attached downstream of `joint_index` per unit
/// joint rate: the perpendicular of the lever arm from the joint axis.
pub fn point_jacobian_column(q: [f64; 2], cfg: &SimConfig, joint_index: usize, point: Vec2) -> Vec2 {
    let origin = joint_origins(q, cfg)[joint_index];
    perp(point - origin)
}

/// Rate of normal-force change per unit velocity of `joint_index`,
/// `k * (-n . J_j(p))`, in N/rad.
pub fn force_gain(contact: &ContactState, q: [f64; 2], cfg: &SimConfig, joint_index: usize) -> f64 {
    -cfg.contact_stiffness * contact.normal.dot(&point_jacobian_column(q, cfg, joint_index, contact.point))
}

pub fn detect_contact(pose: &EePose, surface: &SurfaceModel, cfg: &SimConfig) -> ContactState {
    let signed_distance = surface.normal.dot(&(pose.center - surface.anchor)) - cfg.ee_radius;
    if signed_distance < 0.0 {
        let penetration = (-signed_distance).min(cfg.max_penetration);
        ContactState {
            point: pose.center - cfg.ee_radius * surface.normal,
            normal: surface.normal,
            penetration,
            normal_force: cfg.contact_stiffness * penetration,
            in_contact: true,
        }
    } else {
        ContactState::separated()
    }
}

/// Advances the arm by one explicit-Euler step under a joint velocity command.
pub fn step(
    state: &ArmState,
    q_dot_cmd: [f64; 2],
    surface: &SurfaceModel,
    cfg: &SimConfig,
) -> (ArmState, ContactState) {
    let limit = cfg.joint_velocity_limit;
    let applied = q_dot_cmd.map(|v| v.clamp(-limit, limit));
    let next = ArmState {
        q: [
            wrap_angle(state.q[0] + applied[0] * cfg.dt),
            wrap_angle(state.q[1] + applied[1] * cfg.dt),
        ],
        q_dot_applied: applied,
    };
    let contact = detect_contact(&forward_kinematics(next.q, cfg), surface, cfg);
    (next, contact)
}

/// Location of the contact on the sensor, measured counter-clockwise from the
/// distal axis of link 2. The policy joint's boundary singularity sits at 0
/// (and at pi), so the two signs are the two mirrored contact regions.
pub fn contact_sensor_angle(contact: &ContactState, pose: &EePose) -> Result<f64, SimError> {
    if !contact.in_contact {
        return Err(SimError::NotInContact);
    }
    let offset = contact.point - pose.center;
    Ok(wrap_angle(offset.y.atan2(offset.x) - pose.orientation))
}

/// True when the contact normal's line of action passes within `tol` radians
/// of the axis of `joint_index`.
pub fn is_singular(
    contact: &ContactState,
    q: [f64; 2],
    cfg: &SimConfig,
    joint_index: usize,
    tol: f64,
) -> Result<bool, SimError> {
    if !contact.in_contact {
        return Err(SimError::NotInContact);
    }
    let column = point_jacobian_column(q, cfg, joint_index, contact.point);
    let lever = column.norm();
    if lever == 0.0 {
        return Ok(true);
    }
    Ok(contact.normal.dot(&column).abs() / lever < tol.sin())
}
