//! Closed-loop scenario execution.
//!
//! Loop order per step: sensors, authority (using the previous step's
//! reference wrench), motion generator, tank flags, auxiliary input, control
//! wrench, tank step, plant step.
//!
//! The default integrator solves the plant and the controller's `K̄`/`D̄`
//! terms jointly with the implicit midpoint rule. With `ē` the mean error
//! velocity over the step, the storage then changes by exactly
//! `dt·(ēᵀu + ēᵀw_env − ēᵀ(D̄ + C)ē) + Δψ`, so the discrete passivity residual
//! is non-positive up to rounding. The literal semi-implicit Euler step is
//! kept as an option.

use nalgebra::{Matrix6, Vector3, Vector6, LU, U6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::angles::{pose_diff, wrap_pose};
use crate::authority::{variable_impedance_diag, AuthorityState};
use crate::controller::{
    auxiliary_input, control_wrench, passivity_residual, storage, tank_flags, tank_step, AuxInput,
    ControllerState,
};
use crate::error::Result;
use crate::motion::{generate, ObstacleSphere};
use crate::sim::config::{Integrator, ScenarioConfig};
use crate::sim::environment::{environment_wrench, Environment};
use crate::sim::plant::plant_step;
use crate::sim::sensors::{sensor_models, HumanInput};
use crate::sim::trace::{SimTrace, TraceRow};
use crate::transform::TransformedDemo;

/// Values computed during a step that are not part of the trace file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub u: Vector6<f64>,
    pub w_cmd: Vector6<f64>,
    pub w_contact: Vector6<f64>,
    pub stiffness: Vector6<f64>,
    pub beta: f64,
    pub guidance_active: bool,
    pub button_latched: bool,
    /// Tank energy after the step.
    pub psi_after: f64,
    pub s_dot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub row: TraceRow,
    pub diag: StepDiagnostics,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    td: TransformedDemo,
    td_version: u64,
    pose: Vector6<f64>,
    vel: Vector6<f64>,
    pose_ref: Vector6<f64>,
    vel_ref: Vector6<f64>,
    authority: AuthorityState,
    ctrl: ControllerState,
    env: Environment,
    rng: ChaCha8Rng,
    step_index: u64,
    prev_w_ref: Vector6<f64>,
    prev_i_min: Option<usize>,
    midpoint_lu: LU<f64, U6, U6>,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        let td = TransformedDemo::build(&cfg.demo, cfg.start, cfg.goal)?;
        let midpoint_lu = midpoint_matrix(&cfg).lu();
        Ok(Simulation {
            td,
            td_version: 0,
            pose: cfg.initial_pose,
            vel: cfg.initial_vel,
            pose_ref: cfg.initial_pose,
            vel_ref: cfg.initial_vel,
            authority: AuthorityState::new(cfg.alpha_initial),
            ctrl: ControllerState::new(cfg.tank),
            env: cfg.environment.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            step_index: 0,
            prev_w_ref: Vector6::zeros(),
            prev_i_min: None,
            midpoint_lu,
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.cfg.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn is_finished(&self) -> bool {
        self.step_index as usize >= self.cfg.steps()
    }

    pub fn pose(&self) -> Vector6<f64> {
        self.pose
    }

    pub fn vel(&self) -> Vector6<f64> {
        self.vel
    }

    pub fn position(&self) -> Vector3<f64> {
        self.pose.fixed_rows::<3>(0).into_owned()
    }

    pub fn alpha_h(&self) -> f64 {
        self.authority.alpha_h
    }

    pub fn controller_state(&self) -> &ControllerState {
        &self.ctrl
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn transformed(&self) -> &TransformedDemo {
        &self.td
    }

    /// Incremented whenever the transformed demo is rebuilt.
    pub fn transform_version(&self) -> u64 {
        self.td_version
    }

    pub fn obstacles(&self) -> &[ObstacleSphere] {
        &self.cfg.obstacles
    }

    pub fn add_obstacle(&mut self, obs: ObstacleSphere) {
        self.cfg.obstacles.push(obs);
    }

    pub fn remove_obstacle(&mut self, index: usize) -> Option<ObstacleSphere> {
        (index < self.cfg.obstacles.len()).then(|| self.cfg.obstacles.remove(index))
    }

    /// Moves the goal; the transformed demo is rebuilt only past the rebuild tolerance.
    pub fn set_goal(&mut self, goal: Vector3<f64>) -> Result<()> {
        if self.td.alignment().is_stale(&self.cfg.start, &goal) {
            self.td = TransformedDemo::build(&self.cfg.demo, self.cfg.start, goal)?;
            self.td_version += 1;
            self.prev_i_min = None;
        }
        self.cfg.goal = goal;
        Ok(())
    }

    /// Mutable access for live parameter edits. Motion and authority
    /// parameters are read afresh every step.
    pub fn config_mut(&mut self) -> &mut ScenarioConfig {
        &mut self.cfg
    }

    /// Advances one step with the scripted human input.
    pub fn step(&mut self) -> Result<StepRecord> {
        let human = self.cfg.human.at(self.time());
        self.step_with(&human)
    }

    pub fn step_with(&mut self, human: &HumanInput) -> Result<StepRecord> {
        let cfg = &self.cfg;
        let dt = cfg.dt;
        let t = self.time();
        let pose = self.pose;
        let vel = self.vel;

        let contact = environment_wrench(&pose, &vel, &self.env);
        self.env.update_button(&contact, dt);
        let human = human.applied(&vel);
        let sens = sensor_models(&contact.wrench, &human, &cfg.noise, &mut self.rng);

        let alpha = self
            .authority
            .step(&sens.w_s, &sens.w_est, &(-self.prev_w_ref), &cfg.authority, dt);

        let x: Vector3<f64> = pose.fixed_rows::<3>(0).into_owned();
        let theta: Vector3<f64> = pose.fixed_rows::<3>(3).into_owned();
        let out = generate(&x, &theta, &self.td, &cfg.obstacles, alpha, &cfg.motion, self.prev_i_min)?;
        let w_ref = out.w_ref;

        // reference pose/velocity follow the generator through a first-order filter
        let e = pose_diff(&pose, &self.pose_ref);
        let e_dot = vel - self.vel_ref;
        let mut v_gen = Vector6::zeros();
        v_gen.fixed_rows_mut::<3>(0).copy_from(&out.x_dot_ref);
        v_gen.fixed_rows_mut::<3>(3).copy_from(&out.theta_dot_ref);
        let r = &cfg.reference;
        let v_des = v_gen + (r.leak + r.leak_human * alpha) * e;
        let acc_ref = r.bandwidth * (v_des - self.vel_ref);
        let vel_ref_next = self.vel_ref + dt * acc_ref;

        let psi_before = self.ctrl.tank.psi();
        let mut flags = tank_flags(&self.ctrl.tank, &e_dot, &w_ref);
        let integral = self.ctrl.wrench_error_integral;
        let gains = &cfg.gains;
        let plant = &cfg.plant;
        let aux_for = |flags: &crate::controller::TankFlags| {
            auxiliary_input(&e, &e_dot, &sens.w_s, &w_ref, alpha, flags, &integral, gains)
        };

        let (aux, w_cmd, pose_next, vel_next, pose_ref_next, e_dot_step): (AuxInput, _, _, _, _, _);
        match cfg.integrator {
            Integrator::Midpoint => {
                let vel_ref_mid = 0.5 * (self.vel_ref + vel_ref_next);
                let base = 2.0 * plant.inertia * e_dot / dt - gains.k_bar.component_mul(&e) + sens.w_env;
                let solve = |a: &AuxInput| {
                    self.midpoint_lu
                        .solve(&(base + a.u))
                        .expect("midpoint matrix is positive definite")
                };
                // φ is kept only if the resulting mean error velocity opposes w_ref
                flags.phi = true;
                let with_phi = aux_for(&flags);
                let y_phi = solve(&with_phi);
                let (a, y) = if y_phi.dot(&w_ref) < 0.0 {
                    (with_phi, y_phi)
                } else {
                    flags.phi = false;
                    let a = aux_for(&flags);
                    (a, solve(&a))
                };
                let e_mid = e + 0.5 * dt * y;
                w_cmd = plant.inertia * acc_ref + plant.damping * vel_ref_mid + plant.gravity
                    - gains.k_bar.component_mul(&e_mid)
                    - gains.d_bar.component_mul(&y)
                    + a.u;
                vel_next = vel_ref_next + 2.0 * y - e_dot;
                let mut p = pose + dt * (vel_ref_mid + y);
                wrap_pose(&mut p);
                pose_next = p;
                let mut pr = self.pose_ref + dt * vel_ref_mid;
                wrap_pose(&mut pr);
                pose_ref_next = pr;
                e_dot_step = y;
                aux = a;
            }
            Integrator::SemiImplicit => {
                flags.phi = e_dot.dot(&w_ref) < 0.0;
                let a = aux_for(&flags);
                w_cmd = control_wrench(&self.pose_ref, &self.vel_ref, &acc_ref, &pose, &vel, plant, &a.u, gains);
                (pose_next, vel_next) = plant_step(&pose, &vel, &w_cmd, &sens.w_env, plant, dt);
                let mut pr = self.pose_ref + dt * vel_ref_next;
                wrap_pose(&mut pr);
                pose_ref_next = pr;
                e_dot_step = e_dot;
                aux = a;
            }
        }

        self.ctrl.flags = flags;
        let v_prev = storage(&e, &e_dot, &plant.inertia, gains, self.ctrl.tank.s);
        let update = tank_step(&self.ctrl, &e_dot_step, &aux, &w_ref, &sens.w_s, gains, dt);
        let e_next = pose_diff(&pose_next, &pose_ref_next);
        let e_dot_next = vel_next - vel_ref_next;
        let v_now = storage(&e_next, &e_dot_next, &plant.inertia, gains, update.state.tank.s);
        let residual = passivity_residual(v_prev, v_now, &e_dot_step, &sens.w_env, dt);

        self.ctrl = update.state;
        self.ctrl.last_passivity_residual = residual;
        self.pose = pose_next;
        self.vel = vel_next;
        self.pose_ref = pose_ref_next;
        self.vel_ref = vel_ref_next;
        self.prev_w_ref = w_ref;
        self.prev_i_min = Some(out.i_min);
        self.step_index += 1;

        let row = TraceRow {
            time: t,
            pose,
            vel,
            x_dot_ref: out.x_dot_ref,
            w_ref,
            w_s: sens.w_s,
            w_est: sens.w_est,
            w_env: sens.w_env,
            alpha_h: alpha,
            psi: psi_before,
            gamma: flags.gamma,
            zeta: flags.zeta,
            phi: flags.phi,
            i_min: out.i_min,
            residual,
        };
        let diag = StepDiagnostics {
            u: aux.u,
            w_cmd,
            w_contact: contact.wrench,
            stiffness: variable_impedance_diag(alpha, &gains.k_max).0,
            beta: out.beta,
            guidance_active: out.guidance_active,
            button_latched: self.env.button_latched(),
            psi_after: self.ctrl.tank.psi(),
            s_dot: update.s_dot,
        };
        Ok(StepRecord { row, diag })
    }
}

fn midpoint_matrix(cfg: &ScenarioConfig) -> Matrix6<f64> {
    let dt = cfg.dt;
    2.0 * cfg.plant.inertia / dt
        + cfg.plant.damping
        + Matrix6::from_diagonal(&(cfg.gains.k_bar * (0.5 * dt) + cfg.gains.d_bar))
}

/// Complete run output: the trace plus per-step diagnostics.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub trace: SimTrace,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Source of live human input, polled once per step with the step time.
pub type LiveInput<'a> = &'a mut dyn FnMut(f64) -> Option<HumanInput>;

/// Runs a scenario to completion. Live input, when it yields a value,
/// replaces the scripted timeline for that step.
pub fn run_scenario(cfg: &ScenarioConfig, mut live: Option<LiveInput<'_>>) -> Result<RunOutput> {
    let mut sim = Simulation::new(cfg.clone())?;
    let n = cfg.steps();
    let mut out = RunOutput {
        trace: SimTrace {
            dt: cfg.dt,
            rows: Vec::with_capacity(n),
        },
        diagnostics: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let t = sim.time();
        let human = live
            .as_mut()
            .and_then(|f| f(t))
            .unwrap_or_else(|| cfg.human.at(t));
        let rec = sim.step_with(&human)?;
        out.trace.rows.push(rec.row);
        out.diagnostics.push(rec.diag);
    }
    Ok(out)
}
