//! Synchronous session state: one simulation plus the edits applied to it.

use std::path::{Path, PathBuf};

use serde_json::json;
use tandem::nalgebra::{Vector3, Vector6};
use tandem::sim::{HumanInput, ScenarioConfig, Simulation, StepRecord};
use tandem::{ObstacleSphere, SimTrace};

use crate::protocol::{
    clamp_wrench, ButtonView, ClientMessage, DemoPolyline, ErrorCode, Flags, ForceFrame, ObstacleView, Rejection,
    Request, ServerMessage, Snapshot, MAX_RADIUS, PROTOCOL_VERSION,
};

/// Seconds of simulated time a human force stays applied without a refresh.
pub const FORCE_TIMEOUT: f64 = 0.25;

/// Keys accepted by `set_param`.
pub const LIVE_PARAMS: &[&str] = &[
    "motion.v_th",
    "motion.w_th",
    "motion.lambda_cap",
    "motion.obstacle_gain",
    "authority.a",
    "authority.b",
    "authority.g_plus",
    "authority.g_minus",
    "sim.noise_sigma",
    "sim.noise_sigma_est",
];

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("invalid scenario id `{0}`")]
    BadScenarioId(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Core(#[from] tandem::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Identifiers used in URLs and file names: `[A-Za-z0-9_-]{1,64}`.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

pub fn load_scenario(dir: &Path, id: &str) -> Result<ScenarioConfig, SessionError> {
    if !valid_id(id) {
        return Err(SessionError::BadScenarioId(id.to_string()));
    }
    let path = dir.join(format!("{id}.toml"));
    if !path.is_file() {
        return Err(SessionError::UnknownScenario(id.to_string()));
    }
    Ok(ScenarioConfig::load(path)?)
}

struct HeldForce {
    input: HumanInput,
    expires: f64,
}

pub struct SessionCore {
    id: String,
    scenario_dir: PathBuf,
    scenario: String,
    sim: Simulation,
    obstacle_ids: Vec<u64>,
    next_obstacle_id: u64,
    held: Option<HeldForce>,
    paused: bool,
    fault: Option<String>,
    trace: SimTrace,
    last: Option<StepRecord>,
    run: u32,
    /// Added to the simulation's transform version so it keeps increasing across resets.
    version_base: u64,
    trace_dir: Option<PathBuf>,
}

impl SessionCore {
    pub fn new(id: &str, scenario_dir: &Path, scenario: &str, trace_dir: Option<PathBuf>) -> Result<Self, SessionError> {
        let cfg = load_scenario(scenario_dir, scenario)?;
        Ok(Self::from_config(id, scenario_dir, scenario, cfg, trace_dir)?)
    }

    pub fn from_config(
        id: &str,
        scenario_dir: &Path,
        scenario: &str,
        cfg: ScenarioConfig,
        trace_dir: Option<PathBuf>,
    ) -> tandem::Result<Self> {
        let n_obs = cfg.obstacles.len() as u64;
        let dt = cfg.dt;
        Ok(SessionCore {
            id: id.to_string(),
            scenario_dir: scenario_dir.to_path_buf(),
            scenario: scenario.to_string(),
            sim: Simulation::new(cfg)?,
            obstacle_ids: (0..n_obs).collect(),
            next_obstacle_id: n_obs,
            held: None,
            paused: false,
            fault: None,
            trace: SimTrace::new(dt),
            last: None,
            run: 0,
            version_base: 0,
            trace_dir,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dt(&self) -> f64 {
        self.sim.config().dt
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn trace(&self) -> &SimTrace {
        &self.trace
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    /// True while steps are being taken: not paused, not past the scenario
    /// duration and not stopped by a fault.
    pub fn is_running(&self) -> bool {
        !self.paused && !self.sim.is_finished() && self.fault.is_none()
    }

    /// Changes whenever the transformed demo does, including on reset.
    pub fn transform_version(&self) -> u64 {
        self.version_base + self.sim.transform_version()
    }

    pub fn demo_polyline(&self) -> DemoPolyline {
        DemoPolyline {
            version: self.transform_version(),
            points: self.sim.transformed().positions().iter().map(|p| [p.x, p.y, p.z]).collect(),
        }
    }

    /// Advances one step if running. The held human force replaces the
    /// scripted timeline until it goes stale.
    pub fn step(&mut self) {
        if !self.is_running() {
            return;
        }
        let t = self.sim.time();
        if self.held.as_ref().is_some_and(|h| t >= h.expires) {
            self.held = None;
        }
        let human = match &self.held {
            Some(h) => h.input,
            None => self.sim.config().human.at(t),
        };
        match self.sim.step_with(&human) {
            Ok(rec) => {
                self.trace.rows.push(rec.row);
                self.last = Some(rec);
            }
            Err(e) => {
                log::error!("session {}: simulation stopped: {e}", self.id);
                self.fault = Some(e.to_string());
            }
        }
    }

    pub fn hello(&self, pace: &str, snapshot_hz: f64) -> ServerMessage {
        ServerMessage::Hello {
            v: PROTOCOL_VERSION,
            session: self.id.clone(),
            scenario: self.scenario.clone(),
            dt: self.dt(),
            pace: pace.to_string(),
            snapshot_hz,
            params: LIVE_PARAMS.iter().map(|s| s.to_string()).collect(),
            demo: self.demo_polyline(),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let v3 = |v: &Vector3<f64>| [v.x, v.y, v.z];
        let v6 = |v: &Vector6<f64>| [v[0], v[1], v[2], v[3], v[4], v[5]];
        let tank = &self.sim.config().tank;
        let env = self.sim.environment();
        let obstacles = self
            .sim
            .obstacles()
            .iter()
            .zip(&self.obstacle_ids)
            .map(|(o, id)| ObstacleView {
                id: *id,
                center: v3(&o.center),
                radius: o.radius,
                v_dir: v3(&o.v_dir),
            })
            .collect();
        let button = env.button.as_ref().map(|b| ButtonView {
            wall: b.wall,
            trigger_force: b.trigger_force,
            latched: env.button_latched(),
        });
        let (row, diag) = match &self.last {
            Some(rec) => (Some(rec.row), Some(rec.diag)),
            None => (None, None),
        };
        let zero6 = [0.0; 6];
        Snapshot {
            session: self.id.clone(),
            scenario: self.scenario.clone(),
            time: row.map_or(0.0, |r| r.time),
            step: self.sim.step_index(),
            paused: self.paused,
            finished: self.sim.is_finished(),
            fault: self.fault.clone(),
            pose: row.map_or_else(|| v6(&self.sim.pose()), |r| v6(&r.pose)),
            vel: row.map_or_else(|| v6(&self.sim.vel()), |r| v6(&r.vel)),
            x_dot_ref: row.map_or([0.0; 3], |r| v3(&r.x_dot_ref)),
            w_ref: row.map_or(zero6, |r| v6(&r.w_ref)),
            w_s: row.map_or(zero6, |r| v6(&r.w_s)),
            w_est: row.map_or(zero6, |r| v6(&r.w_est)),
            w_env: row.map_or(zero6, |r| v6(&r.w_env)),
            w_contact: diag.map_or(zero6, |d| v6(&d.w_contact)),
            alpha_h: row.map_or(self.sim.alpha_h(), |r| r.alpha_h),
            psi: row.map_or(self.sim.controller_state().tank.psi(), |r| r.psi),
            psi_lower: tank.psi_lower,
            psi_upper: tank.psi_upper,
            flags: row.map_or(
                Flags {
                    gamma: false,
                    zeta: true,
                    phi: false,
                },
                |r| Flags {
                    gamma: r.gamma,
                    zeta: r.zeta,
                    phi: r.phi,
                },
            ),
            i_min: row.map_or(0, |r| r.i_min),
            goal: v3(&self.sim.config().goal),
            obstacles,
            button,
            transform_version: self.transform_version(),
            demo: None,
        }
    }

    /// Applies one client request and returns its reply.
    pub fn handle(&mut self, req: Request) -> ServerMessage {
        let kind = req.msg.kind();
        match self.apply(req.msg) {
            Ok(applied) => ServerMessage::Ack {
                v: PROTOCOL_VERSION,
                req: req.req,
                of: kind.to_string(),
                applied,
            },
            Err((code, message)) => ServerMessage::rejection(Rejection {
                req: req.req,
                code,
                message,
            }),
        }
    }

    fn apply(&mut self, msg: ClientMessage) -> Result<serde_json::Value, (ErrorCode, String)> {
        let invalid = |m: String| (ErrorCode::InvalidValue, m);
        match msg {
            ClientMessage::HumanForce { frame, wrench } => {
                if wrench.iter().any(|w| !w.is_finite()) {
                    return Err(invalid("wrench must be finite".into()));
                }
                let w = clamp_wrench(wrench);
                let mut input = HumanInput::default();
                let target = match frame {
                    ForceFrame::Tool => &mut input.tool_wrench,
                    ForceFrame::Body => &mut input.body_wrench,
                };
                *target = Vector6::from_column_slice(&w);
                self.held = Some(HeldForce {
                    input,
                    expires: self.sim.time() + FORCE_TIMEOUT,
                });
                Ok(json!({ "frame": frame, "wrench": w }))
            }
            ClientMessage::PlaceObstacle { center, radius, v_dir } => {
                if !(radius > 0.0 && radius <= MAX_RADIUS) {
                    return Err(invalid(format!("radius {radius} outside (0, {MAX_RADIUS}] m")));
                }
                let obs = ObstacleSphere::new(Vector3::from(center), radius, Vector3::from(v_dir))
                    .map_err(|e| invalid(e.to_string()))?;
                let id = self.next_obstacle_id;
                self.next_obstacle_id += 1;
                self.sim.add_obstacle(obs);
                self.obstacle_ids.push(id);
                Ok(json!({ "id": id, "center": center, "radius": radius, "v_dir": v_dir }))
            }
            ClientMessage::RemoveObstacle { id } => {
                let idx = self
                    .obstacle_ids
                    .iter()
                    .position(|o| *o == id)
                    .ok_or((ErrorCode::UnknownObstacle, format!("no obstacle with id {id}")))?;
                self.sim.remove_obstacle(idx);
                self.obstacle_ids.remove(idx);
                Ok(json!({ "id": id }))
            }
            ClientMessage::SetGoal { goal } => {
                if goal.iter().any(|g| !g.is_finite()) {
                    return Err(invalid("goal must be finite".into()));
                }
                self.sim.set_goal(Vector3::from(goal)).map_err(|e| invalid(e.to_string()))?;
                Ok(json!({ "goal": goal, "transform_version": self.transform_version() }))
            }
            ClientMessage::Pause {} => {
                self.paused = true;
                Ok(json!({ "paused": true, "time": self.sim.time() }))
            }
            ClientMessage::Resume {} => {
                self.paused = false;
                Ok(json!({ "paused": false, "time": self.sim.time() }))
            }
            ClientMessage::Reset { scenario } => {
                let id = scenario.unwrap_or_else(|| self.scenario.clone());
                let cfg = load_scenario(&self.scenario_dir, &id).map_err(|e| match e {
                    SessionError::UnknownScenario(_) | SessionError::BadScenarioId(_) => {
                        (ErrorCode::UnknownScenario, e.to_string())
                    }
                    other => invalid(other.to_string()),
                })?;
                self.save_trace().map_err(|e| invalid(format!("saving trace: {e}")))?;
                let fresh = SessionCore::from_config(&self.id, &self.scenario_dir, &id, cfg, self.trace_dir.clone())
                    .map_err(|e| invalid(e.to_string()))?;
                let (run, version_base) = (self.run + 1, self.transform_version() + 1);
                *self = fresh;
                self.run = run;
                self.version_base = version_base;
                Ok(json!({ "scenario": id, "run": run, "transform_version": self.transform_version() }))
            }
            ClientMessage::SetParam { key, value } => {
                self.set_param(&key, value)?;
                Ok(json!({ "key": key, "value": value }))
            }
        }
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<(), (ErrorCode, String)> {
        if !LIVE_PARAMS.contains(&key) {
            return Err((ErrorCode::UnknownKey, format!("`{key}` is not a live parameter")));
        }
        let invalid = |e: String| (ErrorCode::InvalidValue, e);
        let cfg = self.sim.config_mut();
        match key.split_once('.') {
            Some(("motion", field)) => {
                let mut m = cfg.motion.clone();
                match field {
                    "v_th" => m.v_th = value,
                    "w_th" => m.w_th = value,
                    "lambda_cap" => m.lambda_cap = value,
                    _ => m.obstacle_gain = value,
                }
                m.validate().map_err(|e| invalid(e.to_string()))?;
                cfg.motion = m;
            }
            Some(("authority", field)) => {
                let mut a = cfg.authority.clone();
                match field {
                    "a" => a.a = value,
                    "b" => a.b = value,
                    "g_plus" => a.g_plus = value,
                    _ => a.g_minus = value,
                }
                a.validate().map_err(|e| invalid(e.to_string()))?;
                cfg.authority = a;
            }
            _ => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(invalid(format!("{key} must be non-negative")));
                }
                if key == "sim.noise_sigma" {
                    cfg.noise.sigma_s = value;
                } else {
                    cfg.noise.sigma_est = value;
                }
            }
        }
        Ok(())
    }

    /// Writes the trace recorded so far to the trace directory, if one is set.
    pub fn save_trace(&self) -> std::io::Result<Option<PathBuf>> {
        let Some(dir) = &self.trace_dir else {
            return Ok(None);
        };
        if self.trace.is_empty() {
            return Ok(None);
        }
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}-{}.csv", self.id, self.run));
        self.trace
            .save(&path)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        log::info!("session {}: trace saved to {}", self.id, path.display());
        Ok(Some(path))
    }
}
