//! Angle helpers for Euler-angle channels.

use std::f64::consts::{PI, TAU};

use nalgebra::{Vector3, Vector6};

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Per-axis shortest angular difference `target ⊖ current`, wrapped to `(-π, π]`.
pub fn angle_diff(target: &Vector3<f64>, current: &Vector3<f64>) -> Vector3<f64> {
    (target - current).map(wrap_angle)
}

/// Pose difference `a ⊖ b` for 6-vectors `[position; euler]`; only the
/// orientation half is wrapped.
pub fn pose_diff(a: &Vector6<f64>, b: &Vector6<f64>) -> Vector6<f64> {
    let mut d = a - b;
    for i in 3..6 {
        d[i] = wrap_angle(d[i]);
    }
    d
}

pub fn wrap_pose(p: &mut Vector6<f64>) {
    for i in 3..6 {
        p[i] = wrap_angle(p[i]);
    }
}
