//! Task-space rigid-body plant.

use nalgebra::{Matrix6, Vector6};

use crate::angles::wrap_pose;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub inertia: Matrix6<f64>,
    pub damping: Matrix6<f64>,
    pub gravity: Vector6<f64>,
}

impl Default for PlantModel {
    fn default() -> Self {
        PlantModel::point_mass(2.0, 0.05)
    }
}

impl PlantModel {
    /// Diagonal inertia with mass `m` and rotational inertia `j` on each axis.
    pub fn point_mass(m: f64, j: f64) -> Self {
        PlantModel {
            inertia: Matrix6::from_diagonal(&Vector6::new(m, m, m, j, j, j)),
            damping: Matrix6::zeros(),
            gravity: Vector6::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..6 {
            for j in 0..6 {
                if i != j && self.inertia[(i, j)] != 0.0 {
                    return Err(Error::param("plant.inertia", "must be diagonal"));
                }
            }
            if !(self.inertia[(i, i)] > 0.0) || !self.inertia[(i, i)].is_finite() {
                return Err(Error::param("plant.inertia", "diagonal entries must be positive"));
            }
        }
        if self.damping.iter().chain(self.gravity.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("plant", "entries must be finite"));
        }
        let sym = (self.damping + self.damping.transpose()) * 0.5;
        if sym.symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::param("plant.damping", "symmetric part must be positive semidefinite"));
        }
        Ok(())
    }

    pub fn acceleration(&self, vel: &Vector6<f64>, w_cmd: &Vector6<f64>, w_env: &Vector6<f64>) -> Vector6<f64> {
        let rhs = w_cmd + w_env - self.damping * vel - self.gravity;
        rhs.component_div(&self.inertia.diagonal())
    }

    /// Kinetic energy `½ vᵀMv`.
    pub fn kinetic_energy(&self, vel: &Vector6<f64>) -> f64 {
        0.5 * vel.dot(&(self.inertia * vel))
    }
}

/// Semi-implicit Euler step; orientation is wrapped to `(-π, π]`.
pub fn plant_step(
    pose: &Vector6<f64>,
    vel: &Vector6<f64>,
    w_cmd: &Vector6<f64>,
    w_env: &Vector6<f64>,
    plant: &PlantModel,
    dt: f64,
) -> (Vector6<f64>, Vector6<f64>) {
    let acc = plant.acceleration(vel, w_cmd, w_env);
    let vel_next = vel + acc * dt;
    let mut pose_next = pose + vel_next * dt;
    wrap_pose(&mut pose_next);
    (pose_next, vel_next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rest_stays_at_rest() {
        let p = PlantModel::default();
        let pose = Vector6::new(0.1, 0.2, 0.3, 0.0, 0.1, -0.2);
        let z = Vector6::zeros();
        assert_eq!(plant_step(&pose, &z, &z, &z, &p, 1e-3), (pose, z));
    }

    #[test]
    fn constant_force() {
        let p = PlantModel::default();
        let f = Vector6::new(4.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut pose, mut vel) = (Vector6::zeros(), Vector6::zeros());
        let dt = 1e-3;
        for _ in 0..1000 {
            (pose, vel) = plant_step(&pose, &vel, &f, &Vector6::zeros(), &p, dt);
        }
        assert!((vel[0] - 2.0).abs() < 2.0 * dt);
        // x = ½at² with one-step bias
        assert!((pose[0] - 1.0).abs() < 4.0 * dt);
    }

    #[test]
    fn spring_period_matches_analytic() {
        let m = 2.0;
        let k = 50.0;
        let p = PlantModel::point_mass(m, 0.05);
        let dt = 1e-3;
        let (mut pose, mut vel) = (Vector6::new(0.1, 0.0, 0.0, 0.0, 0.0, 0.0), Vector6::zeros());
        let mut crossings = Vec::new();
        let mut t = 0.0;
        for _ in 0..20_000 {
            let w = Vector6::new(-k * pose[0], 0.0, 0.0, 0.0, 0.0, 0.0);
            let before = pose[0];
            (pose, vel) = plant_step(&pose, &vel, &w, &Vector6::zeros(), &p, dt);
            t += dt;
            if before > 0.0 && pose[0] <= 0.0 {
                // linear interpolation of the downward zero crossing
                crossings.push(t - dt * pose[0] / (pose[0] - before));
            }
        }
        let periods: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = periods.iter().sum::<f64>() / periods.len() as f64;
        let analytic = 2.0 * PI * (m / k).sqrt();
        assert!((mean - analytic).abs() / analytic < 0.01, "{mean} vs {analytic}");
    }

    #[test]
    fn orientation_wraps() {
        let p = PlantModel::default();
        let pose = Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, PI - 1e-4);
        let vel = Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let (next, _) = plant_step(&pose, &vel, &Vector6::zeros(), &Vector6::zeros(), &p, 1e-3);
        assert!(next[5] < 0.0 && next[5] > -PI);
    }

    #[test]
    fn validation() {
        assert!(PlantModel::default().validate().is_ok());
        let mut p = PlantModel::default();
        p.damping[(0, 1)] = 5.0;
        assert!(p.validate().is_err());
        let mut p = PlantModel::default();
        p.inertia[(2, 2)] = 0.0;
        assert!(p.validate().is_err());
    }
}
