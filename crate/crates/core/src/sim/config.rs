//! Scenario configuration files (TOML).
//!
//! Every key is optional except `demo.path`; missing keys fall back to the
//! module defaults. Relative paths resolve against the config file's
//! directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::authority::AuthorityParams;
use crate::controller::{ControllerGains, EnergyTank};
use crate::demo::{mean_trajectory, DemoSet, Demonstration};
use crate::error::{Error, Result};
use crate::motion::{MotionParams, ObstacleSphere};
use crate::sim::environment::{Button, Environment, Wall};
use crate::sim::plant::PlantModel;
use crate::sim::sensors::{HumanInput, SensorNoise};

pub const DT_MIN: f64 = 1e-4;
pub const DT_MAX: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Implicit midpoint on the coupled plant/controller error dynamics.
    #[default]
    Midpoint,
    /// Explicit controller followed by a semi-implicit Euler plant step.
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Tool,
    Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanSegment {
    pub start: f64,
    pub end: f64,
    pub frame: Frame,
    pub wrench: [f64; 6],
    /// Hand damping on translation while the segment is active, N·s/m.
    #[serde(default)]
    pub damping: f64,
}

/// Piecewise-constant scripted human wrenches; overlapping segments add up.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HumanTimeline {
    pub segments: Vec<HumanSegment>,
}

impl HumanTimeline {
    pub fn at(&self, t: f64) -> HumanInput {
        let mut out = HumanInput::default();
        for s in &self.segments {
            if t >= s.start && t < s.end {
                let w = Vector6::from(s.wrench);
                match s.frame {
                    Frame::Tool => {
                        out.tool_wrench += w;
                        out.tool_damping += s.damping;
                    }
                    Frame::Body => {
                        out.body_wrench += w;
                        out.body_damping += s.damping;
                    }
                }
            }
        }
        out
    }
}

/// How the reference pose and velocity follow the generator output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceParams {
    /// First-order bandwidth from generator velocity to reference velocity, 1/s.
    pub bandwidth: f64,
    /// Constant pull of the reference toward the measured pose, 1/s.
    pub leak: f64,
    /// Additional pull scaled by human authority, 1/s.
    pub leak_human: f64,
}

impl Default for ReferenceParams {
    fn default() -> Self {
        ReferenceParams {
            bandwidth: 30.0,
            leak: 1.0,
            leak_human: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain3 {
    Scalar(f64),
    Diagonal([f64; 3]),
    Full([[f64; 3]; 3]),
}

impl Gain3 {
    fn matrix(&self) -> Matrix3<f64> {
        match self {
            Gain3::Scalar(s) => Matrix3::identity() * *s,
            Gain3::Diagonal(d) => Matrix3::from_diagonal(&Vector3::from(*d)),
            Gain3::Full(rows) => Matrix3::from_fn(|i, j| rows[i][j]),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain6 {
    Scalar(f64),
    /// `[translational, rotational]`
    Split([f64; 2]),
    Diagonal([f64; 6]),
}

impl Gain6 {
    fn vector(&self) -> Vector6<f64> {
        match self {
            Gain6::Scalar(s) => Vector6::repeat(*s),
            Gain6::Split([t, r]) => Vector6::new(*t, *t, *t, *r, *r, *r),
            Gain6::Diagonal(d) => Vector6::from(*d),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
#[allow(clippy::large_enum_variant)]
pub enum Matrix6Spec {
    Diagonal(Gain6),
    Full([[f64; 6]; 6]),
}

impl Matrix6Spec {
    fn matrix(&self) -> Matrix6<f64> {
        match self {
            Matrix6Spec::Diagonal(g) => Matrix6::from_diagonal(&g.vector()),
            Matrix6Spec::Full(rows) => Matrix6::from_fn(|i, j| rows[i][j]),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSection {
    pub path: Option<PathBuf>,
    /// `mean` averages every demo in a directory; `single` picks `index`.
    pub mode: Option<DemoMode>,
    pub index: Option<usize>,
    pub start: Option<[f64; 3]>,
    pub goal: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoMode {
    Mean,
    Single,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub center: [f64; 3],
    pub radius: f64,
    pub v_dir: [f64; 3],
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSection {
    pub lambda_l: Option<Gain3>,
    pub lambda_a: Option<Gain3>,
    pub v_th: Option<f64>,
    pub w_th: Option<f64>,
    pub lambda_cap: Option<f64>,
    pub obstacle_gain: Option<f64>,
    pub locality_window: Option<usize>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthoritySection {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub g_plus: Option<f64>,
    pub g_minus: Option<f64>,
    pub sensor_lag: Option<f64>,
    pub alpha_initial: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub k_bar: Option<Gain6>,
    pub k_max: Option<Gain6>,
    pub k_w: Option<Gain6>,
    pub k_i: Option<Gain6>,
    pub integral_limit: Option<f64>,
    pub psi_lower: Option<f64>,
    pub psi_upper: Option<f64>,
    pub psi_initial: Option<f64>,
    pub s_floor: Option<f64>,
    pub ref_bandwidth: Option<f64>,
    pub ref_leak: Option<f64>,
    pub ref_leak_human: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub inertia: Option<Gain6>,
    pub damping: Option<Matrix6Spec>,
    pub gravity: Option<[f64; 6]>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSpec {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub stiffness: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ButtonSpec {
    pub wall: usize,
    pub trigger_force: Option<f64>,
    pub hold_time: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    #[serde(default)]
    pub walls: Vec<WallSpec>,
    pub button: Option<ButtonSpec>,
    pub drag: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub seed: Option<u64>,
    pub integrator: Option<Integrator>,
    pub noise_sigma: Option<f64>,
    pub noise_sigma_est: Option<f64>,
    pub noise_sigma_torque: Option<f64>,
    pub initial_position: Option<[f64; 3]>,
    pub initial_orientation: Option<[f64; 3]>,
    pub initial_velocity: Option<[f64; 6]>,
    #[serde(default)]
    pub human: Vec<HumanSegment>,
}

/// Raw file contents, before defaults and validation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    #[serde(default)]
    pub demo: DemoSection,
    #[serde(default)]
    pub motion: MotionSection,
    #[serde(default)]
    pub authority: AuthoritySection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub plant: PlantSection,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub sim: SimSection,
}

/// A fully resolved, validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub demo: Arc<Demonstration>,
    pub start: Vector3<f64>,
    pub goal: Vector3<f64>,
    pub obstacles: Vec<ObstacleSphere>,
    pub motion: MotionParams,
    pub authority: AuthorityParams,
    pub alpha_initial: f64,
    pub gains: ControllerGains,
    pub tank: EnergyTank,
    pub reference: ReferenceParams,
    pub plant: PlantModel,
    pub environment: Environment,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub integrator: Integrator,
    pub noise: SensorNoise,
    pub initial_pose: Vector6<f64>,
    pub initial_vel: Vector6<f64>,
    pub human: HumanTimeline,
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = ScenarioConfig::from_toml_str(&text, base)?;
        if cfg.name.is_empty() {
            cfg.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        ScenarioConfig::from_file(file, base_dir)
    }

    /// Builds a config around an in-memory demonstration, all else default.
    pub fn with_demo(demo: Demonstration) -> Result<Self> {
        let mut cfg = ScenarioConfig::resolve(ScenarioFile::default(), Arc::new(demo))?;
        cfg.name = "inline".into();
        Ok(cfg)
    }

    pub fn from_file(file: ScenarioFile, base_dir: &Path) -> Result<Self> {
        let demo = load_demo(&file.demo, base_dir)?;
        ScenarioConfig::resolve(file, Arc::new(demo))
    }

    fn resolve(file: ScenarioFile, demo: Arc<Demonstration>) -> Result<Self> {
        let start = file.demo.start.map(Vector3::from).unwrap_or_else(|| demo.first_position());
        let goal = file.demo.goal.map(Vector3::from).unwrap_or_else(|| demo.last_position());

        let m = &file.motion;
        let defaults = MotionParams::default();
        let motion = MotionParams {
            lambda_l: m.lambda_l.map(|g| g.matrix()).unwrap_or(defaults.lambda_l),
            lambda_a: m.lambda_a.map(|g| g.matrix()).unwrap_or(defaults.lambda_a),
            v_th: m.v_th.unwrap_or(defaults.v_th),
            w_th: m.w_th.unwrap_or(defaults.w_th),
            lambda_cap: m.lambda_cap.unwrap_or(defaults.lambda_cap),
            obstacle_gain: m.obstacle_gain.unwrap_or(defaults.obstacle_gain),
            locality_window: m.locality_window,
        };
        let obstacles = m
            .obstacles
            .iter()
            .map(|o| ObstacleSphere::new(Vector3::from(o.center), o.radius, Vector3::from(o.v_dir)))
            .collect::<Result<Vec<_>>>()?;

        let a = &file.authority;
        let ad = AuthorityParams::default();
        let authority = AuthorityParams {
            a: a.a.unwrap_or(ad.a),
            b: a.b.unwrap_or(ad.b),
            c1: a.c1.unwrap_or(ad.c1),
            c2: a.c2.unwrap_or(ad.c2),
            g_plus: a.g_plus.unwrap_or(ad.g_plus),
            g_minus: a.g_minus.unwrap_or(ad.g_minus),
            sensor_lag: a.sensor_lag.unwrap_or(ad.sensor_lag),
        };

        let c = &file.controller;
        let gd = ControllerGains::default();
        let mut gains = ControllerGains::new(
            c.k_bar.map(|g| g.vector()).unwrap_or(gd.k_bar),
            c.k_max.map(|g| g.vector()).unwrap_or(gd.k_max),
            c.k_w.map(|g| g.vector()).unwrap_or(gd.k_w),
            c.k_i.map(|g| g.vector()).unwrap_or(gd.k_i),
        );
        gains.integral_limit = c.integral_limit.unwrap_or(gd.integral_limit);
        let td = EnergyTank::default();
        let psi_upper = c.psi_upper.unwrap_or(td.psi_upper);
        let tank = EnergyTank::new(
            c.psi_lower.unwrap_or(td.psi_lower),
            psi_upper,
            c.s_floor.unwrap_or(td.s_floor),
            c.psi_initial.unwrap_or(psi_upper),
        );
        let rd = ReferenceParams::default();
        let reference = ReferenceParams {
            bandwidth: c.ref_bandwidth.unwrap_or(rd.bandwidth),
            leak: c.ref_leak.unwrap_or(rd.leak),
            leak_human: c.ref_leak_human.unwrap_or(rd.leak_human),
        };

        let p = &file.plant;
        let pd = PlantModel::default();
        let plant = PlantModel {
            inertia: p.inertia.map(|g| Matrix6::from_diagonal(&g.vector())).unwrap_or(pd.inertia),
            damping: p.damping.map(|g| g.matrix()).unwrap_or(pd.damping),
            gravity: p.gravity.map(Vector6::from).unwrap_or(pd.gravity),
        };

        let environment = Environment {
            walls: file
                .environment
                .walls
                .iter()
                .map(|w| Wall {
                    point: Vector3::from(w.point),
                    normal: Vector3::from(w.normal),
                    stiffness: w.stiffness,
                    damping: w.damping,
                })
                .collect(),
            button: file
                .environment
                .button
                .map(|b| Button::new(b.wall, b.trigger_force.unwrap_or(15.0), b.hold_time.unwrap_or(0.0))),
            drag: file.environment.drag.unwrap_or(0.0),
        };

        let s = &file.sim;
        let position = s.initial_position.map(Vector3::from).unwrap_or(start);
        let orientation = s
            .initial_orientation
            .map(Vector3::from)
            .unwrap_or_else(|| demo.eulers()[0]);
        let mut initial_pose = Vector6::zeros();
        initial_pose.fixed_rows_mut::<3>(0).copy_from(&position);
        initial_pose.fixed_rows_mut::<3>(3).copy_from(&orientation);

        let cfg = ScenarioConfig {
            name: file.name.clone().unwrap_or_default(),
            demo,
            start,
            goal,
            obstacles,
            motion,
            authority,
            alpha_initial: file.authority.alpha_initial.unwrap_or(0.0),
            gains,
            tank,
            reference,
            plant,
            environment,
            dt: s.dt.unwrap_or(1e-3),
            duration: s.duration.unwrap_or(10.0),
            seed: s.seed.unwrap_or(0),
            integrator: s.integrator.unwrap_or_default(),
            noise: SensorNoise {
                sigma_s: s.noise_sigma.unwrap_or(0.0),
                sigma_est: s.noise_sigma_est.unwrap_or(0.0),
                sigma_torque: s.noise_sigma_torque.unwrap_or(0.0),
            },
            initial_pose,
            initial_vel: s.initial_velocity.map(Vector6::from).unwrap_or_else(Vector6::zeros),
            human: HumanTimeline {
                segments: s.human.clone(),
            },
        };
        cfg.validated()
    }

    fn validated(mut self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    /// Checks every invariant; call again after editing fields.
    pub fn validate(&mut self) -> Result<()> {
        if !(self.dt >= DT_MIN && self.dt <= DT_MAX) {
            return Err(Error::param("sim.dt", format!("{} outside [{DT_MIN}, {DT_MAX}] s", self.dt)));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::param("sim.duration", "must be positive"));
        }
        self.motion.validate()?;
        self.authority.validate()?;
        self.gains.validate()?;
        self.tank.validate()?;
        self.plant.validate()?;
        self.environment.validate(self.dt)?;
        if !(0.0..=1.0).contains(&self.alpha_initial) {
            return Err(Error::param("authority.alpha_initial", "must lie in [0, 1]"));
        }
        let r = &self.reference;
        for (key, v) in [
            ("controller.ref_bandwidth", r.bandwidth),
            ("controller.ref_leak", r.leak),
            ("controller.ref_leak_human", r.leak_human),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(key, "must be non-negative"));
            }
        }
        if !(r.bandwidth > 0.0) {
            return Err(Error::param("controller.ref_bandwidth", "must be positive"));
        }
        let n = self.noise;
        if [n.sigma_s, n.sigma_est, n.sigma_torque].iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::param("sim.noise_sigma", "must be non-negative"));
        }
        for (i, seg) in self.human.segments.iter().enumerate() {
            if !(seg.start < seg.end) || seg.wrench.iter().any(|w| !w.is_finite()) || !(seg.damping >= 0.0) {
                return Err(Error::param(
                    format!("sim.human[{i}]"),
                    "needs start < end, finite wrench and non-negative damping",
                ));
            }
        }
        if !self.initial_pose.iter().chain(self.initial_vel.iter()).all(|v| v.is_finite()) {
            return Err(Error::param("sim.initial_position", "must be finite"));
        }
        crate::transform::Alignment::compute(&self.demo, self.start, self.goal)?;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

fn load_demo(section: &DemoSection, base_dir: &Path) -> Result<Demonstration> {
    let rel = section
        .path
        .as_ref()
        .ok_or_else(|| Error::Config("demo.path is required".into()))?;
    let path = if rel.is_absolute() {
        rel.clone()
    } else {
        base_dir.join(rel)
    };
    if path.is_dir() {
        let set = DemoSet::load_dir(&path)?;
        match section.mode.unwrap_or(DemoMode::Mean) {
            DemoMode::Mean => Ok(mean_trajectory(&set)),
            DemoMode::Single => {
                let i = section.index.unwrap_or(0);
                set.demos()
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::param("demo.index", format!("{i} out of range ({} demos)", set.len())))
            }
        }
    } else if path.is_file() {
        Demonstration::load_auto(&path)
    } else {
        Err(Error::MissingDataset(path.display().to_string()))
    }
}
