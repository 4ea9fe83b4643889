//! Potential-field motion generator.
//!
//! Combines feedback toward the nearest transformed demo sample, the demo's
//! own velocity at that sample, and obstacle repulsion/guidance into a
//! bounded reference velocity scaled down by human authority.

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::angles::angle_diff;
use crate::error::{Error, Result};
use crate::transform::TransformedDemo;

/// Below this feed-forward speed its direction terms are dropped.
const MIN_FF_SPEED: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSphere {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub v_dir: Vector3<f64>,
}

impl ObstacleSphere {
    /// Normalises `v_dir`; rejects non-positive radius or zero direction.
    pub fn new(center: Vector3<f64>, radius: f64, v_dir: Vector3<f64>) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::param("obstacle.radius", "must be positive"));
        }
        let n = v_dir.norm();
        if !(n > 0.0) || !n.is_finite() || !center.iter().all(|c| c.is_finite()) {
            return Err(Error::param("obstacle.v_dir", "must be a finite non-zero vector"));
        }
        Ok(ObstacleSphere {
            center,
            radius,
            v_dir: v_dir / n,
        })
    }

    pub fn clearance(&self, x: &Vector3<f64>) -> f64 {
        (x - self.center).norm() - self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionParams {
    pub lambda_l: Matrix3<f64>,
    pub lambda_a: Matrix3<f64>,
    pub v_th: f64,
    pub w_th: f64,
    pub lambda_cap: f64,
    /// Numerator of the repulsion gain, m²/s. 1.0 gives the plain `1/(d - r)`.
    pub obstacle_gain: f64,
    /// Restrict the nearest-sample search to `±W` around the previous index.
    pub locality_window: Option<usize>,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            lambda_l: Matrix3::identity() * 4.0,
            lambda_a: Matrix3::identity() * 4.0,
            v_th: 0.5,
            w_th: 0.05,
            lambda_cap: 50.0,
            obstacle_gain: 1.0,
            locality_window: None,
        }
    }
}

impl MotionParams {
    pub fn validate(&self) -> Result<()> {
        for (key, m) in [("motion.lambda_l", &self.lambda_l), ("motion.lambda_a", &self.lambda_a)] {
            if (m - m.transpose()).amax() > 1e-12 {
                return Err(Error::param(key, "must be symmetric"));
            }
            match m.cholesky() {
                Some(_) => {}
                None => return Err(Error::param(key, "must be positive definite")),
            }
        }
        let positive = [
            ("motion.v_th", self.v_th),
            ("motion.w_th", self.w_th),
            ("motion.lambda_cap", self.lambda_cap),
            ("motion.obstacle_gain", self.obstacle_gain),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(key, "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOutput {
    pub x_dot_ref: Vector3<f64>,
    pub theta_dot_ref: Vector3<f64>,
    pub w_ref: Vector6<f64>,
    pub i_min: usize,
    pub beta: f64,
    /// Angular feedback term; reported but not part of `theta_dot_ref`.
    pub omega_fb: Vector3<f64>,
    /// True when any obstacle's guidance term was switched on.
    pub guidance_active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleTerm {
    pub v_obs: Vector3<f64>,
    pub lambda: f64,
    pub guidance: bool,
}

pub fn feedback_velocity(
    x: &Vector3<f64>,
    theta: &Vector3<f64>,
    td: &TransformedDemo,
    i_min: usize,
    p: &MotionParams,
) -> (Vector3<f64>, Vector3<f64>) {
    let v_fb = p.lambda_l * (td.positions()[i_min] - x);
    let w_fb = p.lambda_a * angle_diff(&td.eulers()[i_min], theta);
    (v_fb, w_fb)
}

pub fn feedforward_velocity(td: &TransformedDemo, i_min: usize) -> (Vector3<f64>, Vector3<f64>) {
    (td.lin_vels()[i_min], td.ang_vels()[i_min])
}

pub fn repulsion_gain(distance: f64, radius: f64, p: &MotionParams) -> f64 {
    let gap = distance - radius;
    if gap <= 0.0 {
        return p.lambda_cap;
    }
    (p.obstacle_gain / gap).min(p.lambda_cap)
}

pub fn obstacle_velocity(
    x: &Vector3<f64>,
    v_ff: &Vector3<f64>,
    obs: &ObstacleSphere,
    p: &MotionParams,
) -> Result<ObstacleTerm> {
    let offset = x - obs.center;
    let dist = offset.norm();
    if dist == 0.0 {
        return Err(Error::DegeneratePosition);
    }
    let n_o = offset / dist;
    let lambda = repulsion_gain(dist, obs.radius, p);
    let guidance = v_ff.dot(&n_o) <= 0.0;
    let mut v_obs = lambda * n_o;
    if guidance {
        let mut v_proj = obs.v_dir - obs.v_dir.dot(&n_o) * n_o;
        let speed = v_ff.norm();
        if speed >= MIN_FF_SPEED {
            let u = v_ff / speed;
            v_proj += u - u.dot(&n_o) * n_o;
        }
        v_obs += lambda * v_proj;
    }
    Ok(ObstacleTerm {
        v_obs,
        lambda,
        guidance,
    })
}

/// Authority-scaled sum, norm-clamped to `v_th`.
pub fn reference_velocity(
    alpha_h: f64,
    v_fb: &Vector3<f64>,
    v_ff: &Vector3<f64>,
    v_obs: &Vector3<f64>,
    p: &MotionParams,
) -> Vector3<f64> {
    let scale = (1.0 - alpha_h).powi(2);
    clamp_norm(scale * (v_fb + v_ff + v_obs), p.v_th)
}

/// Rescale `v` onto the ball of radius `limit`; the result never exceeds it.
pub fn clamp_norm(v: Vector3<f64>, limit: f64) -> Vector3<f64> {
    let n = v.norm();
    if n <= limit {
        return v;
    }
    let mut out = v * (limit / n);
    // rounding can leave the rescaled norm one ulp above the limit
    while out.norm() > limit {
        out *= 1.0 - f64::EPSILON;
    }
    out
}

pub fn reference_angular_velocity(alpha_h: f64, td: &TransformedDemo, i_min: usize) -> Vector3<f64> {
    (1.0 - alpha_h).powi(2) * td.ang_vels()[i_min]
}

pub fn reference_wrench(
    alpha_h: f64,
    x: &Vector3<f64>,
    theta: &Vector3<f64>,
    td: &TransformedDemo,
    i_min: usize,
    p: &MotionParams,
) -> (Vector6<f64>, f64) {
    let err = (td.positions()[i_min] - x).norm() + angle_diff(&td.eulers()[i_min], theta).norm();
    let beta = if err <= p.w_th {
        (1.0 - alpha_h).powi(2)
    } else {
        0.0
    };
    (beta * td.wrenches()[i_min], beta)
}

/// Full generator step. `prev_index` feeds the optional locality window.
pub fn generate(
    x: &Vector3<f64>,
    theta: &Vector3<f64>,
    td: &TransformedDemo,
    obstacles: &[ObstacleSphere],
    alpha_h: f64,
    p: &MotionParams,
    prev_index: Option<usize>,
) -> Result<ReferenceOutput> {
    let i_min = match (p.locality_window, prev_index) {
        (Some(w), Some(prev)) => td.nearest_index_windowed(x, prev.min(td.len() - 1), w),
        _ => td.nearest_index(x),
    };
    let (v_fb, omega_fb) = feedback_velocity(x, theta, td, i_min, p);
    let (v_ff, _) = feedforward_velocity(td, i_min);
    let mut v_obs = Vector3::zeros();
    let mut guidance_active = false;
    for obs in obstacles {
        let term = obstacle_velocity(x, &v_ff, obs, p)?;
        v_obs += term.v_obs;
        guidance_active |= term.guidance;
    }
    let x_dot_ref = reference_velocity(alpha_h, &v_fb, &v_ff, &v_obs, p);
    let theta_dot_ref = reference_angular_velocity(alpha_h, td, i_min);
    let (w_ref, beta) = reference_wrench(alpha_h, x, theta, td, i_min, p);
    Ok(ReferenceOutput {
        x_dot_ref,
        theta_dot_ref,
        w_ref,
        i_min,
        beta,
        omega_fb,
        guidance_active,
    })
}
