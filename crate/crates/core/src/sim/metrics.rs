//! Run summaries computed from a trace.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::motion::ObstacleSphere;
use crate::sim::trace::SimTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub steps: usize,
    pub final_time: f64,
    /// Distance from the last recorded position to the goal, m.
    pub final_error: f64,
    /// Smallest `‖x − x_obs‖ − r` over the trace and all obstacles, m.
    pub min_obstacle_clearance: Option<f64>,
    /// Largest passivity residual, W.
    pub max_residual: f64,
    pub max_ref_speed: f64,
    pub min_psi: f64,
    pub max_psi: f64,
    pub max_alpha_h: f64,
}

impl Summary {
    pub fn from_trace(trace: &SimTrace, goal: &Vector3<f64>, obstacles: &[ObstacleSphere]) -> Self {
        let rows = &trace.rows;
        let fold = |f: &dyn Fn(&crate::sim::trace::TraceRow) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
            rows.iter().map(f).fold(init, pick)
        };
        let last = rows.last();
        let min_obstacle_clearance = (!obstacles.is_empty() && !rows.is_empty()).then(|| {
            rows.iter()
                .flat_map(|r| obstacles.iter().map(move |o| o.clearance(&r.position())))
                .fold(f64::INFINITY, f64::min)
        });
        let nonempty = |v: f64| if rows.is_empty() { 0.0 } else { v };
        Summary {
            steps: rows.len(),
            final_time: last.map_or(0.0, |r| r.time),
            final_error: last.map_or(0.0, |r| (r.position() - goal).norm()),
            min_obstacle_clearance,
            max_residual: nonempty(fold(&|r| r.residual, f64::NEG_INFINITY, f64::max)),
            max_ref_speed: nonempty(fold(&|r| r.x_dot_ref.norm(), 0.0, f64::max)),
            min_psi: nonempty(fold(&|r| r.psi, f64::INFINITY, f64::min)),
            max_psi: nonempty(fold(&|r| r.psi, f64::NEG_INFINITY, f64::max)),
            max_alpha_h: nonempty(fold(&|r| r.alpha_h, 0.0, f64::max)),
        }
    }

    /// Plain `key: value` lines with round-trip float formatting.
    pub fn to_text(&self) -> String {
        let clearance = self
            .min_obstacle_clearance
            .map_or_else(|| "none".to_string(), |c| format!("{c}"));
        format!(
            "steps: {}\nfinal_time_s: {}\nfinal_error_m: {}\nmin_obstacle_clearance_m: {}\nmax_residual_w: {}\nmax_ref_speed_mps: {}\npsi_range_j: {} {}\nmax_alpha_h: {}\n",
            self.steps,
            self.final_time,
            self.final_error,
            clearance,
            self.max_residual,
            self.max_ref_speed,
            self.min_psi,
            self.max_psi,
            self.max_alpha_h
        )
    }
}
