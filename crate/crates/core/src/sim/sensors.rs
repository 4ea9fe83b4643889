//! Tool-side force/torque sensor and joint-torque wrench estimate.

use nalgebra::Vector6;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HumanInput {
    /// Applied tool-side of the sensor, visible in `w_s`.
    pub tool_wrench: Vector6<f64>,
    /// Applied flange-side, invisible to the sensor.
    pub body_wrench: Vector6<f64>,
    /// Translational damping of the hand on the tool side, N·s/m.
    #[serde(default)]
    pub tool_damping: f64,
    #[serde(default)]
    pub body_damping: f64,
}

impl HumanInput {
    pub fn total(&self) -> Vector6<f64> {
        self.tool_wrench + self.body_wrench
    }

    /// Folds the hand damping into the wrenches at the given velocity.
    pub fn applied(&self, vel: &Vector6<f64>) -> HumanInput {
        let mut drag = Vector6::zeros();
        drag.fixed_rows_mut::<3>(0).copy_from(&vel.fixed_rows::<3>(0));
        HumanInput {
            tool_wrench: self.tool_wrench - self.tool_damping * drag,
            body_wrench: self.body_wrench - self.body_damping * drag,
            tool_damping: 0.0,
            body_damping: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorNoise {
    /// Force noise on `w_s`, N.
    pub sigma_s: f64,
    /// Force noise on `w_est`, N.
    pub sigma_est: f64,
    /// Torque noise on both channels, N·m.
    pub sigma_torque: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReadings {
    pub w_s: Vector6<f64>,
    pub w_est: Vector6<f64>,
    pub w_env: Vector6<f64>,
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma_force: f64, sigma_torque: f64) -> Vector6<f64> {
    let mut out = Vector6::zeros();
    for (i, sigma) in [(0..3, sigma_force), (3..6, sigma_torque)] {
        if sigma > 0.0 {
            let dist = Normal::new(0.0, sigma).expect("sigma is finite and positive");
            for k in i {
                out[k] = dist.sample(rng);
            }
        }
    }
    out
}

/// Splits contact and human wrenches into the two measurement channels.
///
/// Noise is drawn in a fixed order (sensor first, then estimate) so runs are
/// reproducible from the seed.
pub fn sensor_models<R: Rng + ?Sized>(
    w_contact: &Vector6<f64>,
    human: &HumanInput,
    noise: &SensorNoise,
    rng: &mut R,
) -> SensorReadings {
    let w_env = w_contact + human.tool_wrench + human.body_wrench;
    let w_s = w_contact + human.tool_wrench + gaussian(rng, noise.sigma_s, noise.sigma_torque);
    let w_est = w_env + gaussian(rng, noise.sigma_est, noise.sigma_torque);
    SensorReadings { w_s, w_est, w_env }
}
