//! Desired acceleration to command-set conversion and the outer position loop.
//!
//! Two converters share the same attitude map. They differ only in how the
//! total-thrust command compensates for tilt:
//!
//! * [`Converter::Case1`] uses the *commanded* attitude, which the vehicle
//!   only reaches after the attitude loop settles.
//! * [`Converter::Case2`] uses the *measured* attitude, so the vertical
//!   component of thrust is correct at every instant.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vehicle::{thrust_direction, yaw_rotation, TILT_ABORT};

/// Commands closer than this to free fall (m/s^2) are rejected.
pub const FREE_FALL_MARGIN: f64 = 0.5;

/// Smallest admissible `cos φ cos θ` for the measured-attitude converter.
pub const MIN_TILT_COSINE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConversionError {
    #[error("vertical pseudo-acceleration {0:.4} m/s^2 is within the free-fall margin")]
    NearFreeFall(f64),
    #[error("measured attitude too steep for thrust compensation (cos product {0:.4})")]
    SteepAttitude(f64),
    #[error("mass must be positive")]
    BadMass,
}

/// Yaw-derotated, gravity-removed acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoAccel(pub Vector3<f64>);

impl PseudoAccel {
    pub fn x(&self) -> f64 {
        self.0.x
    }
    pub fn y(&self) -> f64 {
        self.0.y
    }
    pub fn z(&self) -> f64 {
        self.0.z
    }
}

/// Desired pitch, roll and total thrust.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandSet {
    /// rad
    pub pitch: f64,
    /// rad
    pub roll: f64,
    /// N, nonnegative magnitude
    pub thrust: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Converter {
    Case1,
    Case2,
}

impl std::str::FromStr for Converter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "case1" => Ok(Self::Case1),
            "case2" => Ok(Self::Case2),
            other => Err(format!(
                "unknown converter '{other}' (expected case1|case2)"
            )),
        }
    }
}

impl std::fmt::Display for Converter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Case1 => "case1",
            Self::Case2 => "case2",
        })
    }
}

impl Converter {
    pub fn convert(
        self,
        accel: &PseudoAccel,
        roll_meas: f64,
        pitch_meas: f64,
        mass: f64,
    ) -> Result<CommandSet, ConversionError> {
        match self {
            Self::Case1 => convert_case1(accel, mass),
            Self::Case2 => convert_case2(accel, roll_meas, pitch_meas, mass),
        }
    }
}

/// `R^-1(ψ) F / m`.
pub fn pseudo_accel_from_force(force: &Vector3<f64>, yaw: f64, mass: f64) -> PseudoAccel {
    PseudoAccel(yaw_rotation(yaw).transpose() * force / mass)
}

/// Forward model `m a = -h(φ, θ) T`.
pub fn accel_from_commands(r: &CommandSet, mass: f64) -> PseudoAccel {
    PseudoAccel(-thrust_direction(r.roll, r.pitch) * r.thrust / mass)
}

fn attitude_from_accel(a: &PseudoAccel) -> Result<(f64, f64), ConversionError> {
    if a.z() > -FREE_FALL_MARGIN {
        return Err(ConversionError::NearFreeFall(a.z()));
    }
    let pitch = (a.x() / a.z()).atan();
    let roll = (-a.y() * pitch.cos() / a.z()).atan();
    Ok((pitch, roll))
}

/// Thrust from the commanded attitude (kinematic inversion).
pub fn convert_case1(a: &PseudoAccel, mass: f64) -> Result<CommandSet, ConversionError> {
    if !(mass > 0.0) {
        return Err(ConversionError::BadMass);
    }
    let (pitch, roll) = attitude_from_accel(a)?;
    Ok(CommandSet {
        pitch,
        roll,
        thrust: mass * a.0.norm(),
    })
}

/// Thrust from the measured attitude.
pub fn convert_case2(
    a: &PseudoAccel,
    roll_meas: f64,
    pitch_meas: f64,
    mass: f64,
) -> Result<CommandSet, ConversionError> {
    if !(mass > 0.0) {
        return Err(ConversionError::BadMass);
    }
    let (pitch, roll) = attitude_from_accel(a)?;
    let c = roll_meas.cos() * pitch_meas.cos();
    if c < MIN_TILT_COSINE || roll_meas.abs() > TILT_ABORT || pitch_meas.abs() > TILT_ABORT {
        return Err(ConversionError::SteepAttitude(c));
    }
    Ok(CommandSet {
        pitch,
        roll,
        thrust: -mass * a.z() / c,
    })
}

/// `F_d = m (a_d - g z)`.
pub fn desired_force(accel_d: &Vector3<f64>, mass: f64, gravity: f64) -> Vector3<f64> {
    (accel_d - Vector3::new(0.0, 0.0, gravity)) * mass
}

/// Outer-loop PD gains and the per-axis acceleration clamp.
///
/// The defaults are deliberately soft: the attitude loop they wrap is only
/// lightly damped, and stiffer gains (e.g. kp = 2, kd = 2.8) destabilize the
/// cascade at the nominal inertia.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionGains {
    pub kp: f64,
    pub kd: f64,
    /// m/s^2, applied per axis
    pub accel_limit: f64,
}

impl Default for PositionGains {
    fn default() -> Self {
        Self {
            kp: 0.3,
            kd: 0.5,
            accel_limit: 3.0,
        }
    }
}

/// Position, velocity and feedforward acceleration of a reference.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Reference {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub accel: Vector3<f64>,
}

/// PD position law with feedforward, clamped per axis.
pub fn position_controller(
    reference: &Reference,
    position: &Vector3<f64>,
    velocity: &Vector3<f64>,
    gains: &PositionGains,
) -> Vector3<f64> {
    let raw = (reference.position - position) * gains.kp
        + (reference.velocity - velocity) * gains.kd
        + reference.accel;
    raw.map(|a| a.clamp(-gains.accel_limit, gains.accel_limit))
}
