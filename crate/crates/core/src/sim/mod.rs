//! Task-space plant simulator and scenario runner.

pub mod config;
pub mod engine;
pub mod environment;
pub mod metrics;
pub mod plant;
pub mod sensors;
pub mod trace;

pub use config::{Frame, HumanSegment, HumanTimeline, Integrator, ReferenceParams, ScenarioConfig};
pub use engine::{run_scenario, RunOutput, Simulation, StepDiagnostics, StepRecord};
pub use environment::{environment_wrench, Button, Environment, Wall};
pub use metrics::Summary;
pub use plant::{plant_step, PlantModel};
pub use sensors::{sensor_models, HumanInput, SensorNoise, SensorReadings};
pub use trace::{SimTrace, TraceRow};
