//! Variable impedance and force controller with energy-tank passivation.
//!
//! Sign convention: `w_ref` is the wrench the end-effector should exert on
//! the environment, while measured wrenches act on the robot. The wrench
//! tracking error is therefore `w_meas + w_ref`, which vanishes when the
//! reaction equals `-w_ref`.

use nalgebra::{Matrix6, Vector6};

use crate::authority::variable_impedance_diag;
use crate::error::{Error, Result};
use crate::sim::plant::PlantModel;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    pub k_bar: Vector6<f64>,
    pub d_bar: Vector6<f64>,
    pub k_max: Vector6<f64>,
    pub k_w: Vector6<f64>,
    pub k_i: Vector6<f64>,
    /// Elementwise anti-windup bound on the wrench-error integral.
    pub integral_limit: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains::new(
            Vector6::new(50.0, 50.0, 50.0, 5.0, 5.0, 5.0),
            Vector6::new(800.0, 800.0, 800.0, 30.0, 30.0, 30.0),
            Vector6::repeat(0.5),
            Vector6::repeat(2.0),
        )
    }
}

impl ControllerGains {
    /// Baseline damping is derived as `2 √K̄`.
    pub fn new(k_bar: Vector6<f64>, k_max: Vector6<f64>, k_w: Vector6<f64>, k_i: Vector6<f64>) -> Self {
        ControllerGains {
            d_bar: k_bar.map(|k| 2.0 * k.max(0.0).sqrt()),
            k_bar,
            k_max,
            k_w,
            k_i,
            integral_limit: 50.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("controller.k_max", &self.k_max),
            ("controller.k_w", &self.k_w),
            ("controller.k_i", &self.k_i),
        ];
        for (key, v) in checks {
            if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::param(key, "entries must be finite and non-negative"));
            }
        }
        if self.k_bar.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::param("controller.k_bar", "entries must be positive"));
        }
        if !(self.integral_limit > 0.0) {
            return Err(Error::param("controller.integral_limit", "must be positive"));
        }
        Ok(())
    }

    pub fn k_bar_matrix(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&self.k_bar)
    }

    pub fn d_bar_matrix(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&self.d_bar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTank {
    pub s: f64,
    pub psi_lower: f64,
    pub psi_upper: f64,
    pub s_floor: f64,
}

impl Default for EnergyTank {
    fn default() -> Self {
        EnergyTank::new(10.0, 20.0, 0.1, 20.0)
    }
}

impl EnergyTank {
    pub fn new(psi_lower: f64, psi_upper: f64, s_floor: f64, psi_initial: f64) -> Self {
        EnergyTank {
            s: (2.0 * psi_initial).sqrt().max(s_floor),
            psi_lower,
            psi_upper,
            s_floor,
        }
    }

    pub fn psi(&self) -> f64 {
        0.5 * self.s * self.s
    }

    pub fn psi_floor(&self) -> f64 {
        0.5 * self.s_floor * self.s_floor
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.psi_lower > 0.0) {
            return Err(Error::param("controller.psi_lower", "must be positive"));
        }
        if !(self.psi_upper > self.psi_lower) {
            return Err(Error::param("controller.psi_upper", "must exceed psi_lower"));
        }
        if !(self.s_floor > 0.0) {
            return Err(Error::param("controller.s_floor", "must be positive"));
        }
        if !(self.s >= self.s_floor) || !self.s.is_finite() {
            return Err(Error::param("controller.psi_initial", "tank state below floor"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TankFlags {
    pub gamma: bool,
    pub zeta: bool,
    pub phi: bool,
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl TankFlags {
    pub fn gamma_f(&self) -> f64 {
        ind(self.gamma)
    }
    pub fn zeta_f(&self) -> f64 {
        ind(self.zeta)
    }
    pub fn phi_f(&self) -> f64 {
        ind(self.phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub wrench_error_integral: Vector6<f64>,
    pub tank: EnergyTank,
    pub flags: TankFlags,
    pub last_passivity_residual: f64,
}

impl ControllerState {
    pub fn new(tank: EnergyTank) -> Self {
        ControllerState {
            wrench_error_integral: Vector6::zeros(),
            tank,
            flags: TankFlags {
                gamma: tank.psi() <= tank.psi_upper,
                zeta: tank.psi() >= tank.psi_lower,
                phi: false,
            },
            last_passivity_residual: 0.0,
        }
    }
}

pub fn tank_flags(tank: &EnergyTank, e_dot: &Vector6<f64>, w_ref: &Vector6<f64>) -> TankFlags {
    let psi = tank.psi();
    TankFlags {
        gamma: psi <= tank.psi_upper,
        zeta: psi >= tank.psi_lower,
        phi: e_dot.dot(w_ref) < 0.0,
    }
}

/// Tracking error between a measured wrench (acting on the robot) and the
/// reference (exerted by the robot).
pub fn wrench_error(w_meas: &Vector6<f64>, w_ref: &Vector6<f64>) -> Vector6<f64> {
    w_meas + w_ref
}

/// Auxiliary input split into its tank-fed part and the total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxInput {
    pub u: Vector6<f64>,
    /// The bracketed term multiplied by ζ.
    pub inner: Vector6<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn auxiliary_input(
    e: &Vector6<f64>,
    e_dot: &Vector6<f64>,
    w_meas: &Vector6<f64>,
    w_ref: &Vector6<f64>,
    alpha_h: f64,
    flags: &TankFlags,
    integral: &Vector6<f64>,
    g: &ControllerGains,
) -> AuxInput {
    let (k, d) = variable_impedance_diag(alpha_h, &g.k_max);
    let err = wrench_error(w_meas, w_ref);
    let inner = -k.component_mul(e) - d.component_mul(e_dot)
        + (1.0 - flags.phi_f()) * w_ref
        + g.k_w.component_mul(&err)
        + g.k_i.component_mul(integral);
    AuxInput {
        u: flags.zeta_f() * inner + flags.phi_f() * w_ref,
        inner,
    }
}

/// Power flowing into the tank, `s·ṡ`.
pub fn tank_power(
    flags: &TankFlags,
    e_dot: &Vector6<f64>,
    inner: &Vector6<f64>,
    w_ref: &Vector6<f64>,
    g: &ControllerGains,
) -> f64 {
    let dissipated = e_dot.dot(&g.d_bar.component_mul(e_dot));
    flags.gamma_f() * (dissipated - flags.phi_f() * e_dot.dot(w_ref)) - flags.zeta_f() * e_dot.dot(inner)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TankUpdate {
    pub state: ControllerState,
    pub s_dot: f64,
    pub power: f64,
}

/// Advances the tank and the wrench-error integral by one step.
///
/// The tank is integrated in energy form, `ψ ← ψ + dt·s·ṡ`, floored at
/// `½ s_floor²`. With γ = 0 any inflow is discarded so the tank stays
/// bounded; this only removes energy from the storage.
pub fn tank_step(
    st: &ControllerState,
    e_dot: &Vector6<f64>,
    aux: &AuxInput,
    w_ref: &Vector6<f64>,
    w_meas: &Vector6<f64>,
    g: &ControllerGains,
    dt: f64,
) -> TankUpdate {
    let mut power = tank_power(&st.flags, e_dot, &aux.inner, w_ref, g);
    if !st.flags.gamma {
        power = power.min(0.0);
    }
    let tank = st.tank;
    let psi = (tank.psi() + dt * power).max(tank.psi_floor());
    let s_dot = power / tank.s;
    let new_tank = EnergyTank {
        s: (2.0 * psi).sqrt().max(tank.s_floor),
        ..tank
    };
    let limit = g.integral_limit;
    let integral = (st.wrench_error_integral + wrench_error(w_meas, w_ref) * dt).map(|v| v.clamp(-limit, limit));
    let flags = TankFlags {
        gamma: new_tank.psi() <= new_tank.psi_upper,
        zeta: new_tank.psi() >= new_tank.psi_lower,
        phi: st.flags.phi,
    };
    TankUpdate {
        state: ControllerState {
            wrench_error_integral: integral,
            tank: new_tank,
            flags,
            last_passivity_residual: st.last_passivity_residual,
        },
        s_dot,
        power,
    }
}

/// Literal tank rate `ṡ` from the current state, for inspection and tests.
#[allow(clippy::too_many_arguments)]
pub fn tank_rate(
    st: &ControllerState,
    e: &Vector6<f64>,
    e_dot: &Vector6<f64>,
    w_ref: &Vector6<f64>,
    w_meas: &Vector6<f64>,
    alpha_h: f64,
    g: &ControllerGains,
) -> f64 {
    let aux = auxiliary_input(e, e_dot, w_meas, w_ref, alpha_h, &st.flags, &st.wrench_error_integral, g);
    tank_power(&st.flags, e_dot, &aux.inner, w_ref, g) / st.tank.s
}

/// `w = M·acc_ref + C·vel_ref + g − K̄e − D̄ė + u`.
#[allow(clippy::too_many_arguments)]
pub fn control_wrench(
    pose_ref: &Vector6<f64>,
    vel_ref: &Vector6<f64>,
    acc_ref: &Vector6<f64>,
    pose: &Vector6<f64>,
    vel: &Vector6<f64>,
    plant: &PlantModel,
    u: &Vector6<f64>,
    g: &ControllerGains,
) -> Vector6<f64> {
    let e = crate::angles::pose_diff(pose, pose_ref);
    let e_dot = vel - vel_ref;
    plant.inertia * acc_ref + plant.damping * vel_ref + plant.gravity - g.k_bar.component_mul(&e)
        - g.d_bar.component_mul(&e_dot)
        + u
}

/// Storage `½ėᵀMė + ½eᵀK̄e + ½s²`.
pub fn storage(e: &Vector6<f64>, e_dot: &Vector6<f64>, inertia: &Matrix6<f64>, g: &ControllerGains, s: f64) -> f64 {
    0.5 * e_dot.dot(&(inertia * e_dot)) + 0.5 * e.dot(&g.k_bar.component_mul(e)) + 0.5 * s * s
}

pub fn passivity_residual(v_prev: f64, v_now: f64, e_dot: &Vector6<f64>, w_env: &Vector6<f64>, dt: f64) -> f64 {
    (v_now - v_prev) / dt - e_dot.dot(w_env)
}

/// Residual tolerance, 1e-3 W at 1 ms and linear in `dt`.
pub fn passivity_tolerance(dt: f64) -> f64 {
    1e-3 * dt / 1e-3
}
