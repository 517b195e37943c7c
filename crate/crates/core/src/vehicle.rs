//! Nonlinear rigid-body multirotor model with a PD attitude loop.
//!
//! Frames: earth-fixed NED (gravity on +z), body thrust `[0, 0, -T]`.
//! Attitude is ZYX Euler `(roll, pitch, yaw)`.

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GRAVITY: f64 = 9.81;

/// Pitch (or roll) magnitude beyond which the Euler kinematics are
/// considered too close to the singularity to continue.
pub const TILT_ABORT: f64 = 1.45;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VehicleError {
    #[error("attitude left the valid envelope: roll {roll:.4} rad, pitch {pitch:.4} rad")]
    TiltAbort { roll: f64, pitch: f64 },
    #[error("non-finite vehicle state")]
    NonFinite,
    #[error("invalid vehicle parameter: {0}")]
    InvalidParams(String),
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
}

/// Per-axis attitude PD gains (roll, pitch, yaw).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttitudeGains {
    pub p: [f64; 3],
    pub d: [f64; 3],
}

impl Default for AttitudeGains {
    fn default() -> Self {
        Self {
            p: [3.0, 3.0, 3.0],
            d: [1.0, 1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// Diagonal of the inertia tensor (kg m^2).
    pub inertia: [f64; 3],
    pub gains: AttitudeGains,
    /// m/s^2, acting on +z.
    pub gravity: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 3.24,
            inertia: [0.82, 0.82, 1.49],
            gains: AttitudeGains::default(),
            gravity: GRAVITY,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), VehicleError> {
        if !(self.mass > 0.0) {
            return Err(VehicleError::InvalidParams(format!("mass {}", self.mass)));
        }
        if self.inertia.iter().any(|&j| !(j > 0.0)) {
            return Err(VehicleError::InvalidParams(format!(
                "inertia {:?}",
                self.inertia
            )));
        }
        if self
            .gains
            .p
            .iter()
            .chain(self.gains.d.iter())
            .any(|&g| !(g > 0.0))
        {
            return Err(VehicleError::InvalidParams(
                "attitude gains must be > 0".into(),
            ));
        }
        if !(self.gravity > 0.0) {
            return Err(VehicleError::InvalidParams(format!(
                "gravity {}",
                self.gravity
            )));
        }
        Ok(())
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.inertia))
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    /// m, NED
    pub position: Vector3<f64>,
    /// m/s
    pub velocity: Vector3<f64>,
    /// (roll, pitch, yaw) rad
    pub attitude: Vector3<f64>,
    /// body rates (p, q, r) rad/s
    pub rate: Vector3<f64>,
}

pub type StateVector = SVector<f64, 12>;

impl VehicleState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            ..Default::default()
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut v = StateVector::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.position);
        v.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        v.fixed_rows_mut::<3>(6).copy_from(&self.attitude);
        v.fixed_rows_mut::<3>(9).copy_from(&self.rate);
        v
    }

    pub fn from_vector(v: &StateVector) -> Self {
        Self {
            position: v.fixed_rows::<3>(0).into_owned(),
            velocity: v.fixed_rows::<3>(3).into_owned(),
            attitude: v.fixed_rows::<3>(6).into_owned(),
            rate: v.fixed_rows::<3>(9).into_owned(),
        }
    }

    pub fn roll(&self) -> f64 {
        self.attitude.x
    }

    pub fn pitch(&self) -> f64 {
        self.attitude.y
    }

    pub fn yaw(&self) -> f64 {
        self.attitude.z
    }

    /// Rotational kinetic energy `0.5 Ω^T J Ω`.
    pub fn rotational_energy(&self, params: &VehicleParams) -> f64 {
        0.5 * self.rate.dot(&(params.inertia_matrix() * self.rate))
    }
}

/// Body torques and total thrust magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub torque: Vector3<f64>,
    pub thrust: f64,
}

impl ControlInput {
    pub fn hover(params: &VehicleParams) -> Self {
        Self {
            torque: Vector3::zeros(),
            thrust: params.hover_thrust(),
        }
    }
}

/// Time derivative of a [`VehicleState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub euler_rates: Vector3<f64>,
    pub angular_acceleration: Vector3<f64>,
}

impl StateDerivative {
    fn to_vector(self) -> StateVector {
        VehicleState {
            position: self.velocity,
            velocity: self.acceleration,
            attitude: self.euler_rates,
            rate: self.angular_acceleration,
        }
        .to_vector()
    }
}

/// Unit thrust axis `h(φ, θ)` in the yaw-derotated frame.
pub fn thrust_direction(roll: f64, pitch: f64) -> Vector3<f64> {
    let (sp, cp) = roll.sin_cos();
    let (st, ct) = pitch.sin_cos();
    Vector3::new(cp * st, -sp, cp * ct)
}

/// Rotation about earth z by `yaw`.
pub fn yaw_rotation(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Body-to-earth rotation `Rz(ψ) Ry(θ) Rx(φ)`.
pub fn rotation_matrix(attitude: &Vector3<f64>) -> Matrix3<f64> {
    let (sp, cp) = attitude.x.sin_cos();
    let (st, ct) = attitude.y.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
    let ry = Matrix3::new(ct, 0.0, st, 0.0, 1.0, 0.0, -st, 0.0, ct);
    yaw_rotation(attitude.z) * ry * rx
}

/// Maps body rates to ZYX Euler-angle rates.
pub fn euler_rates(attitude: &Vector3<f64>, rate: &Vector3<f64>) -> Vector3<f64> {
    let (sp, cp) = attitude.x.sin_cos();
    let (st, ct) = attitude.y.sin_cos();
    let (p, q, r) = (rate.x, rate.y, rate.z);
    let a = q * sp + r * cp;
    Vector3::new(p + a * st / ct, q * cp - r * sp, a / ct)
}

fn check_envelope(state: &VehicleState) -> Result<(), VehicleError> {
    if !state.to_vector().iter().all(|x| x.is_finite()) {
        return Err(VehicleError::NonFinite);
    }
    if state.roll().abs() > TILT_ABORT || state.pitch().abs() > TILT_ABORT {
        return Err(VehicleError::TiltAbort {
            roll: state.roll(),
            pitch: state.pitch(),
        });
    }
    Ok(())
}

/// Full rigid-body equations of motion, including the gyroscopic term.
pub fn dynamics_derivative(
    state: &VehicleState,
    input: &ControlInput,
    disturbance: &Vector3<f64>,
    params: &VehicleParams,
) -> Result<StateDerivative, VehicleError> {
    check_envelope(state)?;
    let h = thrust_direction(state.roll(), state.pitch());
    let force = -(yaw_rotation(state.yaw()) * h) * input.thrust + disturbance;
    let acceleration = force / params.mass + Vector3::new(0.0, 0.0, params.gravity);

    let j = Vector3::from(params.inertia);
    let omega = state.rate;
    let gyro = omega.cross(&j.component_mul(&omega));
    let angular_acceleration = (input.torque - gyro).component_div(&j);

    Ok(StateDerivative {
        velocity: state.velocity,
        acceleration,
        euler_rates: euler_rates(&state.attitude, &omega),
        angular_acceleration,
    })
}

/// Commanded roll/pitch and their rates. Yaw is always regulated to zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttitudeTarget {
    pub roll: f64,
    pub pitch: f64,
    pub roll_rate: f64,
    pub pitch_rate: f64,
}

/// PD attitude law on the attitude error and its rate.
pub fn attitude_pd(
    target: &AttitudeTarget,
    state: &VehicleState,
    params: &VehicleParams,
) -> Vector3<f64> {
    let rates = euler_rates(&state.attitude, &state.rate);
    let q_d = Vector3::new(target.roll, target.pitch, 0.0);
    let rate_d = Vector3::new(target.roll_rate, target.pitch_rate, 0.0);
    let g = &params.gains;
    Vector3::from_fn(|i, _| g.p[i] * (q_d[i] - state.attitude[i]) + g.d[i] * (rate_d[i] - rates[i]))
}

/// Classical fourth-order Runge-Kutta step with input and disturbance held.
pub fn step_rk4(
    state: &VehicleState,
    input: &ControlInput,
    disturbance: &Vector3<f64>,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState, VehicleError> {
    if !(dt > 0.0) {
        return Err(VehicleError::BadStep(dt));
    }
    let f = |x: &StateVector| -> Result<StateVector, VehicleError> {
        dynamics_derivative(&VehicleState::from_vector(x), input, disturbance, params)
            .map(StateDerivative::to_vector)
    };
    let x0 = state.to_vector();
    let k1 = f(&x0)?;
    let k2 = f(&(x0 + k1 * (0.5 * dt)))?;
    let k3 = f(&(x0 + k2 * (0.5 * dt)))?;
    let k4 = f(&(x0 + k3 * dt))?;
    let x1 = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let next = VehicleState::from_vector(&x1);
    check_envelope(&next)?;
    Ok(next)
}
