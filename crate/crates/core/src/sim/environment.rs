//! Unilateral spring-damper walls and a latching button.

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub stiffness: f64,
    pub damping: f64,
}

impl Wall {
    /// Penetration depth and the non-adhesive normal force magnitude.
    pub fn contact(&self, position: &Vector3<f64>, velocity: &Vector3<f64>) -> (f64, f64) {
        let depth = (self.point - position).dot(&self.normal).max(0.0);
        if depth == 0.0 {
            return (0.0, 0.0);
        }
        let force = self.stiffness * depth - self.damping * velocity.dot(&self.normal);
        (depth, force.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Button {
    pub wall: usize,
    pub trigger_force: f64,
    /// Time the force must stay above the trigger before latching.
    pub hold_time: f64,
    pub latched: bool,
    pub held_for: f64,
}

impl Button {
    pub fn new(wall: usize, trigger_force: f64, hold_time: f64) -> Self {
        Button {
            wall,
            trigger_force,
            hold_time,
            latched: false,
            held_for: 0.0,
        }
    }

    pub fn update(&mut self, normal_force: f64, dt: f64) {
        if normal_force >= self.trigger_force {
            self.held_for += dt;
            if self.held_for >= self.hold_time {
                self.latched = true;
            }
        } else {
            self.held_for = 0.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Environment {
    pub walls: Vec<Wall>,
    pub button: Option<Button>,
    /// Viscous drag on translation, N·s/m, standing in for tool/surface friction.
    #[serde(default)]
    pub drag: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactState {
    pub wrench: Vector6<f64>,
    pub normal_forces: Vec<f64>,
}

impl Environment {
    pub fn validate(&mut self, dt: f64) -> Result<()> {
        for (i, w) in self.walls.iter_mut().enumerate() {
            if !(w.stiffness >= 0.0) || !(w.damping >= 0.0) {
                return Err(Error::param(format!("environment.walls[{i}]"), "stiffness and damping must be non-negative"));
            }
            let n = w.normal.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::param(format!("environment.walls[{i}].normal"), "must be non-zero"));
            }
            w.normal /= n;
            if w.damping < 0.5 * w.stiffness * dt {
                log::warn!(
                    "wall {i}: damping {} below ½·k·dt = {}; contact may gain energy",
                    w.damping,
                    0.5 * w.stiffness * dt
                );
            }
        }
        if !(self.drag >= 0.0) || !self.drag.is_finite() {
            return Err(Error::param("environment.drag", "must be finite and non-negative"));
        }
        if let Some(b) = &self.button {
            if b.wall >= self.walls.len() {
                return Err(Error::param("environment.button.wall", "index out of range"));
            }
            if !(b.trigger_force > 0.0) {
                return Err(Error::param("environment.button.trigger_force", "must be positive"));
            }
            if !(b.hold_time >= 0.0) {
                return Err(Error::param("environment.button.hold_time", "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Advances the button latch using the normal forces of a contact evaluation.
    pub fn update_button(&mut self, contact: &ContactState, dt: f64) {
        if let Some(b) = &mut self.button {
            b.update(contact.normal_forces[b.wall], dt);
        }
    }

    pub fn button_latched(&self) -> bool {
        self.button.is_some_and(|b| b.latched)
    }
}

/// Summed wall forces on the robot; torques are zero.
pub fn environment_wrench(pose: &Vector6<f64>, vel: &Vector6<f64>, env: &Environment) -> ContactState {
    let position = pose.fixed_rows::<3>(0).into_owned();
    let velocity = vel.fixed_rows::<3>(0).into_owned();
    let mut force = Vector3::zeros();
    let mut normal_forces = Vec::with_capacity(env.walls.len());
    for wall in &env.walls {
        let (_, f) = wall.contact(&position, &velocity);
        force += f * wall.normal;
        normal_forces.push(f);
    }
    force -= env.drag * velocity;
    let mut wrench = Vector6::zeros();
    wrench.fixed_rows_mut::<3>(0).copy_from(&force);
    ContactState { wrench, normal_forces }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn floor() -> Environment {
        Environment {
            drag: 0.0,
            walls: vec![Wall {
                point: Vector3::zeros(),
                normal: Vector3::z(),
                stiffness: 10_000.0,
                damping: 20.0,
            }],
            button: Some(Button::new(0, 15.0, 0.0)),
        }
    }

    fn pose_at(z: f64) -> Vector6<f64> {
        Vector6::new(0.0, 0.0, z, 0.0, 0.0, 0.0)
    }

    #[test]
    fn no_penetration_no_force() {
        let c = environment_wrench(&pose_at(0.01), &Vector6::zeros(), &floor());
        assert_eq!(c.wrench, Vector6::zeros());
    }

    #[test]
    fn hooke_static() {
        let c = environment_wrench(&pose_at(-1e-3), &Vector6::zeros(), &floor());
        assert!((c.wrench - Vector6::new(0.0, 0.0, 10.0, 0.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn non_adhesive_when_pulling_out() {
        let vel = Vector6::new(0.0, 0.0, 10.0, 0.0, 0.0, 0.0);
        let c = environment_wrench(&pose_at(-1e-3), &vel, &floor());
        assert_eq!(c.wrench, Vector6::zeros());
    }

    #[test]
    fn button_latches_at_trigger() {
        let mut env = floor();
        let c = environment_wrench(&pose_at(-1.4e-3), &Vector6::zeros(), &env);
        env.update_button(&c, 1e-3);
        assert!(!env.button_latched());
        let c = environment_wrench(&pose_at(-1.6e-3), &Vector6::zeros(), &env);
        env.update_button(&c, 1e-3);
        assert!(env.button_latched());
        // stays latched after release
        let c = environment_wrench(&pose_at(0.1), &Vector6::zeros(), &env);
        env.update_button(&c, 1e-3);
        assert!(env.button_latched());
    }

    #[test]
    fn hold_time_requires_sustained_force() {
        let mut b = Button::new(0, 15.0, 0.005);
        for _ in 0..3 {
            b.update(16.0, 1e-3);
        }
        b.update(10.0, 1e-3);
        assert!(!b.latched);
        for _ in 0..5 {
            b.update(16.0, 1e-3);
        }
        assert!(b.latched);
    }

    #[test]
    fn drag_opposes_velocity() {
        let env = Environment {
            drag: 20.0,
            ..Default::default()
        };
        let vel = Vector6::new(0.1, -0.2, 0.0, 1.0, 0.0, 0.0);
        let c = environment_wrench(&Vector6::zeros(), &vel, &env);
        assert_eq!(c.wrench, Vector6::new(-2.0, 4.0, 0.0, 0.0, 0.0, 0.0));
    }
}
