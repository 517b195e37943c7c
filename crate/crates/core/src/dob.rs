//! Translational-force disturbance observer.
//!
//! The estimator works channel-wise in the yaw-derotated frame:
//!
//! ```text
//! d_hat = Q1 Pn^-1 F_meas - Q2 F_cmd_prev
//! ```
//!
//! where `F_meas = m (a_meas - g)` and `F_cmd_prev` is the compensated force
//! command applied over the previous control period. Only the proper
//! products `Q1 Pn^-1` and `Q2` are realized as discrete filters.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linsys::{discretize_bilinear, DiscreteFilter, LinsysError, TransferFunction};
use crate::vehicle::{yaw_rotation, AttitudeGains};

/// Estimate ramp-in time after engagement (s).
pub const WARMUP: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DobError {
    #[error("invalid Q-filter configuration: {0}")]
    InvalidQFilter(String),
    #[error("invalid nominal model parameter: {0}")]
    InvalidNominal(String),
    #[error(transparent)]
    Linsys(#[from] LinsysError),
}

/// Nominal `r_d -> r` model per force channel (X, Y, Z).
#[derive(Debug, Clone, PartialEq)]
pub struct NominalModel {
    pub channels: [TransferFunction; 3],
}

/// Closed PD attitude loop `(D s + P) / (J s^2 + D s + P)`.
pub fn attitude_loop(inertia: f64, p: f64, d: f64) -> TransferFunction {
    TransferFunction::new(vec![d, p], vec![inertia, d, p])
        .expect("attitude loop coefficients are finite with nonzero leading term")
}

/// Builds the nominal model from the nominal roll/pitch inertia and gains.
///
/// The X force channel is driven by pitch and the Y channel by roll; the
/// thrust channel is unity.
pub fn build_nominal(
    nominal_inertia: [f64; 3],
    gains: &AttitudeGains,
) -> Result<NominalModel, DobError> {
    if nominal_inertia[..2].iter().any(|&j| !(j > 0.0))
        || gains.p[..2]
            .iter()
            .chain(&gains.d[..2])
            .any(|&g| !(g > 0.0))
    {
        return Err(DobError::InvalidNominal(format!(
            "inertia {nominal_inertia:?}, gains {gains:?}"
        )));
    }
    Ok(NominalModel {
        channels: [
            attitude_loop(nominal_inertia[1], gains.p[1], gains.d[1]),
            attitude_loop(nominal_inertia[0], gains.p[0], gains.d[0]),
            TransferFunction::constant(1.0),
        ],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QFilterConfig {
    /// Horizontal (second-order) time constant, s.
    pub tau_h: f64,
    /// Vertical (first-order) time constant, s.
    pub tau_v: f64,
    pub zeta: f64,
}

impl Default for QFilterConfig {
    fn default() -> Self {
        Self {
            tau_h: 0.15,
            tau_v: 0.12,
            zeta: 0.707,
        }
    }
}

impl QFilterConfig {
    pub fn validate(&self) -> Result<(), DobError> {
        if !(self.tau_h > 0.0 && self.tau_v > 0.0 && self.zeta > 0.0) {
            return Err(DobError::InvalidQFilter(format!("{self:?}")));
        }
        Ok(())
    }
}

/// `1 / ((τ s)^2 + ζ τ s + 1)`
pub fn q_horizontal(tau: f64, zeta: f64) -> TransferFunction {
    TransferFunction::new(vec![1.0], vec![tau * tau, zeta * tau, 1.0])
        .expect("finite Q-filter coefficients")
}

/// `1 / (τ s + 1)`
pub fn q_vertical(tau: f64) -> TransferFunction {
    TransferFunction::new(vec![1.0], vec![tau, 1.0]).expect("finite Q-filter coefficients")
}

/// Q1 per channel; Q2 is identical to Q1.
#[derive(Debug, Clone, PartialEq)]
pub struct QFilters {
    pub q1: [TransferFunction; 3],
    pub q2: [TransferFunction; 3],
}

pub fn build_q_filters(cfg: &QFilterConfig) -> Result<QFilters, DobError> {
    cfg.validate()?;
    let h = q_horizontal(cfg.tau_h, cfg.zeta);
    let v = q_vertical(cfg.tau_v);
    let q1 = [h.clone(), h, v];
    Ok(QFilters { q2: q1.clone(), q1 })
}

/// `Q1 Pn^-1` for every channel, kept without cancellation.
pub fn inverse_paths(
    nominal: &NominalModel,
    q: &QFilters,
) -> Result<[TransferFunction; 3], DobError> {
    let mk = |i: usize| -> Result<TransferFunction, DobError> {
        Ok(q.q1[i].series(&nominal.channels[i].inverse()?))
    };
    Ok([mk(0)?, mk(1)?, mk(2)?])
}

/// Runtime estimator state.
#[derive(Debug, Clone)]
pub struct DisturbanceObserver {
    inverse_path: [DiscreteFilter; 3],
    command_path: [DiscreteFilter; 3],
    limit: f64,
    elapsed: f64,
    dt: f64,
    estimate: Vector3<f64>,
}

impl DisturbanceObserver {
    /// `limit` clamps each axis of the estimate (N).
    pub fn new(
        nominal: &NominalModel,
        q: &QFilters,
        dt: f64,
        limit: f64,
    ) -> Result<Self, DobError> {
        let inv = inverse_paths(nominal, q)?;
        let d = |tf: &TransferFunction| discretize_bilinear(tf, dt);
        Ok(Self {
            inverse_path: [d(&inv[0])?, d(&inv[1])?, d(&inv[2])?],
            command_path: [d(&q.q2[0])?, d(&q.q2[1])?, d(&q.q2[2])?],
            limit,
            elapsed: 0.0,
            dt,
            estimate: Vector3::zeros(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Last returned estimate (earth frame, N).
    pub fn estimate(&self) -> Vector3<f64> {
        self.estimate
    }

    /// Unclamped, un-ramped output of the two filter paths in the derotated
    /// frame. Advances the filters by one sample.
    fn step_raw(&mut self, measured: &Vector3<f64>, command_prev: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|i, _| {
            self.inverse_path[i].step(measured[i]) - self.command_path[i].step(command_prev[i])
        })
    }

    /// One estimator tick. Both forces are earth-frame; the returned
    /// estimate is earth-frame, ramped in over [`WARMUP`] and clamped.
    pub fn update(
        &mut self,
        measured_force: &Vector3<f64>,
        command_prev: &Vector3<f64>,
        yaw: f64,
    ) -> Vector3<f64> {
        let r = yaw_rotation(yaw);
        let rt = r.transpose();
        let raw = self.step_raw(&(rt * measured_force), &(rt * command_prev));
        self.elapsed += self.dt;
        let ramp = (self.elapsed / WARMUP).min(1.0);
        let limit = self.limit;
        let local = raw.map(|x| (x * ramp).clamp(-limit, limit));
        self.estimate = r * local;
        self.estimate
    }
}

/// `F~_d = F_d - d_hat`.
pub fn compensate(force_d: &Vector3<f64>, d_hat: &Vector3<f64>) -> Vector3<f64> {
    force_d - d_hat
}
