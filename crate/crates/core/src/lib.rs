//! Shared-autonomy motion generation and control.
//!
//! A demonstration is mapped onto the current start and goal, a potential
//! field turns it into reference velocities and wrenches, an authority
//! arbiter decides how much the human leads, and an energy-tank-bounded
//! impedance controller closes the loop around a task-space plant.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angles;
pub mod authority;
pub mod controller;
pub mod demo;
pub mod error;
pub mod kdtree;
pub mod motion;
pub mod reproduction;
pub mod sim;
pub mod transform;

pub use authority::{AuthorityParams, AuthorityState};
pub use controller::{ControllerGains, ControllerState, EnergyTank, TankFlags};
pub use demo::{mean_trajectory, DemoFormat, DemoSet, Demonstration};
pub use error::{Error, Result};
pub use motion::{MotionParams, ObstacleSphere, ReferenceOutput};
pub use sim::{run_scenario, HumanInput, ScenarioConfig, SimTrace, Simulation, Summary, TraceRow};
pub use transform::{Alignment, TransformedDemo};

pub use nalgebra;
