use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controller::{run_controlled, ForceController};
use crate::env::{DrSample, EnvConfig, EnvError, EnvState};
use crate::error::ConfigError;

/// Sensor contact angles of the three tracking runs, degrees.
pub const TRACKING_ANGLES_DEG: [f64; 3] = [60.0, -60.0, -30.0];

/// Goal staircase from `start` toward `end` in increments of `step`, each
/// level held for `hold_steps`. The final level is `end` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampSchedule {
    pub start: f64,
    pub step: f64,
    pub end: f64,
    pub hold_steps: usize,
}

impl Default for RampSchedule {
    fn default() -> Self {
        Self {
            start: 3.0,
            step: 0.4,
            end: 5.0,
            hold_steps: 10,
        }
    }
}

impl RampSchedule {
    /// The distinct goal levels in order.
    pub fn levels(&self) -> Vec<f64> {
        let mut levels = vec![self.start];
        if self.step == 0.0 || self.start == self.end {
            return levels;
        }
        let dir = (self.end - self.start).signum();
        let inc = self.step.abs() * dir;
        let mut g = self.start;
        loop {
            g += inc;
            // the 1e-9 slack absorbs accumulated rounding of the increments
            if (self.end - g) * dir <= 1e-9 {
                levels.push(self.end);
                return levels;
            }
            levels.push(g);
        }
    }

    pub fn total_steps(&self) -> usize {
        self.levels().len() * self.hold_steps
    }

    pub fn goal_at(&self, t: usize) -> f64 {
        let levels = self.levels();
        levels[(t / self.hold_steps).min(levels.len() - 1)]
    }
}

impl FromStr for RampSchedule {
    type Err = ConfigError;

    /// `start:step:end`, with the default hold length.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || ConfigError::invalid("ramp", format!("expected start:step:end, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        if nums.iter().any(|v| !v.is_finite()) || nums[1] < 0.0 || nums[0] <= 0.0 || nums[2] <= 0.0 {
            return Err(bad());
        }
        Ok(Self {
            start: nums[0],
            step: nums[1],
            end: nums[2],
            ..Self::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingStep {
    pub step: usize,
    pub goal: f64,
    pub f_n: f64,
    pub in_contact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingRun {
    pub contact_angle: f64,
    pub schedule: RampSchedule,
    pub steps: Vec<TrackingStep>,
}

impl TrackingRun {
    pub fn broke_contact(&self) -> bool {
        self.steps.len() < self.schedule.total_steps() || self.steps.iter().any(|s| !s.in_contact)
    }

    /// Largest `|f_n - goal|` over each goal level once `settle` steps of it
    /// have elapsed (the `settle`-th step included).
    pub fn worst_error_after(&self, settle: usize) -> f64 {
        let hold = self.schedule.hold_steps;
        self.steps
            .iter()
            .filter(|s| s.step % hold + 1 >= settle.max(1))
            .map(|s| (s.f_n - s.goal).abs())
            .fold(0.0, f64::max)
    }

    /// Steps until the error first drops to `tol` for each level, `None` for
    /// levels where it never does.
    pub fn settling_steps(&self, tol: f64) -> Vec<Option<usize>> {
        let hold = self.schedule.hold_steps;
        self.steps
            .chunks(hold)
            .map(|level| level.iter().position(|s| (s.f_n - s.goal).abs() <= tol).map(|i| i + 1))
            .collect()
    }

    /// Mean absolute error over the last half of every level.
    pub fn steady_state_error(&self) -> f64 {
        let hold = self.schedule.hold_steps;
        let tail: Vec<f64> = self
            .steps
            .iter()
            .filter(|s| s.step % hold >= hold / 2)
            .map(|s| (s.f_n - s.goal).abs())
            .collect();
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,goal,f_n,error,in_contact\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.step,
                s.goal,
                s.f_n,
                s.f_n - s.goal,
                s.in_contact as u8
            ));
        }
        out
    }
}

/// Starts in contact at `contact_angle` (radians) with the first goal level
/// already applied, motion joint still, and follows the staircase.
pub fn force_tracking_experiment(
    controller: &mut dyn ForceController,
    cfg: &EnvConfig,
    contact_angle: f64,
    schedule: RampSchedule,
) -> Result<TrackingRun, EnvError> {
    let start = DrSample {
        contact_angle,
        initial_force: schedule.start,
        goal: schedule.start,
        motion_velocity: 0.0,
    };
    let state = EnvState::from_sample(cfg, start)?;
    let traj = run_controlled(
        controller,
        state,
        &|_| [0.0, 0.0],
        &|t| schedule.goal_at(t),
        schedule.total_steps(),
    )?;
    Ok(TrackingRun {
        contact_angle,
        schedule,
        steps: traj
            .records
            .iter()
            .map(|r| TrackingStep {
                step: r.step,
                goal: r.goal,
                f_n: r.f_n,
                in_contact: r.in_contact,
            })
            .collect(),
    })
}
