//! Closed-loop scenario runner: outer position loop, converter, attitude PD,
//! RK4 plant and the disturbance observer.

pub mod metrics;
pub mod signals;

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conversion::{
    desired_force, position_controller, pseudo_accel_from_force, CommandSet, Converter,
    PositionGains, Reference,
};
use crate::dob::{build_nominal, build_q_filters, DisturbanceObserver, DobError, QFilterConfig};
use crate::vehicle::{
    attitude_pd, dynamics_derivative, step_rk4, AttitudeTarget, ControlInput, VehicleError,
    VehicleParams, VehicleState,
};
pub use metrics::{metrics, Metrics, MetricsError, DEFAULT_WINDOW};
pub use signals::{
    accel_profile_reference, circle_reference, disturbance_signal, hover_reference,
    AccelProfileParams, CircleParams, Disturbance, Trajectory,
};

/// Control period (s).
pub const CONTROL_DT: f64 = 0.004;
/// Physics substeps per control period.
pub const SUBSTEPS: usize = 4;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Dob(#[from] DobError),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Constant deviations of the flown plant from the nominal one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantPerturbation {
    /// Realized thrust = gain * commanded thrust.
    pub thrust_gain: f64,
    /// Transport delay on the command set (s), rounded to control ticks.
    pub input_delay: f64,
}

impl Default for PlantPerturbation {
    fn default() -> Self {
        Self {
            thrust_gain: 1.0,
            input_delay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub converter: Converter,
    pub dob: bool,
    pub q_filter: QFilterConfig,
    pub trajectory: Trajectory,
    pub disturbance: Disturbance,
    /// s
    pub duration: f64,
    /// Plant roll/pitch inertia override; controller and nominal model keep
    /// `vehicle.inertia`.
    pub inertia_override: Option<f64>,
    pub seed: u64,
    /// Standard deviation of white noise on the measured acceleration (m/s^2).
    pub accel_noise: f64,
    pub vehicle: VehicleParams,
    pub position_gains: PositionGains,
    pub circle: CircleParams,
    pub accel_profile: AccelProfileParams,
    pub perturbation: PlantPerturbation,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            converter: Converter::Case2,
            dob: true,
            q_filter: QFilterConfig::default(),
            trajectory: Trajectory::Hover,
            disturbance: Disturbance::None,
            duration: 30.0,
            inertia_override: None,
            seed: 0,
            accel_noise: 0.0,
            vehicle: VehicleParams::default(),
            position_gains: PositionGains::default(),
            circle: CircleParams::default(),
            accel_profile: AccelProfileParams::default(),
            perturbation: PlantPerturbation::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        self.vehicle.validate()?;
        self.q_filter.validate()?;
        self.disturbance.validate().map_err(SimError::Config)?;
        if let Some(j) = self.inertia_override {
            if !(j > 0.0) {
                return bad(format!("inertia override must be > 0, got {j}"));
            }
        }
        if !(self.accel_noise >= 0.0) {
            return bad("accel noise must be >= 0".into());
        }
        let g = &self.position_gains;
        if !(g.kp >= 0.0 && g.kd >= 0.0 && g.accel_limit > 0.0) {
            return bad(format!("invalid position gains {g:?}"));
        }
        if !(self.circle.period > 0.0 && self.circle.radius >= 0.0) {
            return bad("circle needs period > 0 and radius >= 0".into());
        }
        if !(self.accel_profile.omega > 0.0) {
            return bad("accel profile needs omega > 0".into());
        }
        let p = &self.perturbation;
        if !(p.thrust_gain > 0.0 && p.input_delay >= 0.0) {
            return bad(format!("invalid plant perturbation {p:?}"));
        }
        Ok(())
    }

    /// The vehicle actually flown.
    pub fn plant(&self) -> VehicleParams {
        let mut p = self.vehicle;
        if let Some(j) = self.inertia_override {
            p.inertia[0] = j;
            p.inertia[1] = j;
        }
        p
    }

    pub fn reference(&self, t: f64) -> Reference {
        match self.trajectory {
            Trajectory::Hover => hover_reference(self.circle.height),
            Trajectory::Circle => circle_reference(t, &self.circle),
            Trajectory::AccelProfile => accel_profile_reference(t, &self.accel_profile),
        }
    }
}

/// One control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub position: Vector3<f64>,
    pub position_d: Vector3<f64>,
    /// Measured acceleration.
    pub accel: Vector3<f64>,
    pub accel_d: Vector3<f64>,
    /// (roll, pitch, yaw)
    pub attitude: Vector3<f64>,
    /// (roll_d, pitch_d)
    pub attitude_d: [f64; 2],
    pub thrust: f64,
    pub force_d: Vector3<f64>,
    pub force_cmd: Vector3<f64>,
    pub disturbance: Vector3<f64>,
    pub d_hat: Vector3<f64>,
}

pub const LOG_COLUMNS: [&str; 31] = [
    "t", "x", "y", "z", "x_d", "y_d", "z_d", "ax", "ay", "az", "ax_d", "ay_d", "az_d", "roll",
    "pitch", "yaw", "roll_d", "pitch_d", "thrust", "fd_x", "fd_y", "fd_z", "fc_x", "fc_y", "fc_z",
    "d_x", "d_y", "d_z", "dhat_x", "dhat_y", "dhat_z",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    pub dt: f64,
    /// Set when the run stopped early.
    pub abort: Option<String>,
}

impl RunLog {
    /// Header plus one row per tick. Column order:
    /// t, position, position_d, accel, accel_d, roll/pitch/yaw, roll_d,
    /// pitch_d, thrust, F_d, compensated F_d, injected d, estimated d.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LOG_COLUMNS)?;
        for r in &self.rows {
            let mut rec: Vec<f64> = Vec::with_capacity(31);
            rec.push(r.t);
            for v in [
                &r.position,
                &r.position_d,
                &r.accel,
                &r.accel_d,
                &r.attitude,
            ] {
                rec.extend(v.iter());
            }
            rec.extend(r.attitude_d);
            rec.push(r.thrust);
            for v in [&r.force_d, &r.force_cmd, &r.disturbance, &r.d_hat] {
                rec.extend(v.iter());
            }
            w.write_record(rec.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Executes one scenario. Configuration problems are errors; a vehicle or
/// converter failure mid-run truncates the log and records the reason.
pub fn run(cfg: &ScenarioConfig) -> Result<RunLog, SimError> {
    cfg.validate()?;
    let nominal = cfg.vehicle;
    let plant = cfg.plant();
    let m = nominal.mass;
    let g = nominal.gravity;
    let gravity = Vector3::new(0.0, 0.0, g);
    let physics_dt = CONTROL_DT / SUBSTEPS as f64;

    let nominal_model = build_nominal(nominal.inertia, &nominal.gains)?;
    let q = build_q_filters(&cfg.q_filter)?;
    let limit = m * cfg.position_gains.accel_limit;
    let mut dob = DisturbanceObserver::new(&nominal_model, &q, CONTROL_DT, limit)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise =
        (cfg.accel_noise > 0.0).then(|| Normal::new(0.0, cfg.accel_noise).expect("finite std"));

    let r0 = cfg.reference(0.0);
    let mut state = VehicleState {
        position: r0.position,
        velocity: r0.velocity,
        ..Default::default()
    };
    let mut input = ControlInput::hover(&plant);
    let hover_cmd = CommandSet {
        pitch: 0.0,
        roll: 0.0,
        thrust: nominal.hover_thrust(),
    };
    let delay_ticks = (cfg.perturbation.input_delay / CONTROL_DT).round() as usize;
    let mut pipeline: VecDeque<CommandSet> = std::iter::repeat_n(hover_cmd, delay_ticks).collect();
    let mut force_cmd_prev = -gravity * m;
    let mut applied_prev = hover_cmd;

    let ticks = (cfg.duration / CONTROL_DT).round() as usize;
    let mut log = RunLog {
        rows: Vec::with_capacity(ticks),
        dt: CONTROL_DT,
        abort: None,
    };

    for k in 0..ticks {
        let t = k as f64 * CONTROL_DT;
        let d = disturbance_signal(&cfg.disturbance, t, m);
        let mut accel = match dynamics_derivative(&state, &input, &d, &plant) {
            Ok(deriv) => deriv.acceleration,
            Err(e) => {
                log.abort = Some(format!("t={t:.3}: {e}"));
                break;
            }
        };
        if let Some(n) = &noise {
            accel += Vector3::from_fn(|_, _| n.sample(&mut rng));
        }

        let reference = cfg.reference(t);
        let accel_d = match cfg.trajectory {
            Trajectory::AccelProfile => {
                let lim = cfg.position_gains.accel_limit;
                reference.accel.map(|a| a.clamp(-lim, lim))
            }
            _ => position_controller(
                &reference,
                &state.position,
                &state.velocity,
                &cfg.position_gains,
            ),
        };
        let force_d = desired_force(&accel_d, m, g);
        let measured_force = (accel - gravity) * m;
        let d_hat = dob.update(&measured_force, &force_cmd_prev, state.yaw());
        let force_cmd = if cfg.dob { force_d - d_hat } else { force_d };

        let pseudo = pseudo_accel_from_force(&force_cmd, state.yaw(), m);
        let cmd = match cfg
            .converter
            .convert(&pseudo, state.roll(), state.pitch(), m)
        {
            Ok(c) => c,
            Err(e) => {
                log.abort = Some(format!("t={t:.3}: {e}"));
                break;
            }
        };
        log.rows.push(LogRow {
            t,
            position: state.position,
            position_d: reference.position,
            accel,
            accel_d,
            attitude: state.attitude,
            attitude_d: [cmd.roll, cmd.pitch],
            thrust: cmd.thrust,
            force_d,
            force_cmd,
            disturbance: d,
            d_hat,
        });
        force_cmd_prev = force_cmd;

        pipeline.push_back(cmd);
        let applied = pipeline
            .pop_front()
            .expect("pipeline holds the new command");
        // command rate by backward difference, held over the control period
        let target = AttitudeTarget {
            roll: applied.roll,
            pitch: applied.pitch,
            roll_rate: (applied.roll - applied_prev.roll) / CONTROL_DT,
            pitch_rate: (applied.pitch - applied_prev.pitch) / CONTROL_DT,
        };
        applied_prev = applied;
        for sub in 0..SUBSTEPS {
            let ts = t + sub as f64 * physics_dt;
            let ds = disturbance_signal(&cfg.disturbance, ts, m);
            input = ControlInput {
                torque: attitude_pd(&target, &state, &plant),
                thrust: cfg.perturbation.thrust_gain * applied.thrust,
            };
            match step_rk4(&state, &input, &ds, &plant, physics_dt) {
                Ok(s) => state = s,
                Err(e) => {
                    log.abort = Some(format!("t={ts:.3}: {e}"));
                    return Ok(log);
                }
            }
        }
    }
    Ok(log)
}

/// Which converter-comparison experiment a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoiExperiment {
    AccelProfile,
    Tracking,
}

impl std::fmt::Display for MoiExperiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::AccelProfile => "accel-profile",
            Self::Tracking => "tracking",
        })
    }
}

#[derive(Debug, Clone)]
pub struct MoiRun {
    pub experiment: MoiExperiment,
    pub converter: Converter,
    pub inertia: f64,
    pub metrics: Metrics,
    pub log: RunLog,
}

/// Runs {case1, case2} x `inertias` on the acceleration profile and on the
/// circle, with the observer disabled. Plant inertia only is overridden.
pub fn moi_comparison(
    inertias: &[f64],
    template: &ScenarioConfig,
) -> Result<Vec<MoiRun>, SimError> {
    if let Some(j) = inertias.iter().find(|&&j| !(j > 0.0)) {
        return Err(SimError::Config(format!("inertia must be > 0, got {j}")));
    }
    let mut jobs = Vec::new();
    for experiment in [MoiExperiment::AccelProfile, MoiExperiment::Tracking] {
        for converter in [Converter::Case1, Converter::Case2] {
            for &j in inertias {
                jobs.push((experiment, converter, j));
            }
        }
    }
    jobs.par_iter()
        .map(|&(experiment, converter, j)| {
            let cfg = ScenarioConfig {
                converter,
                dob: false,
                trajectory: match experiment {
                    MoiExperiment::AccelProfile => Trajectory::AccelProfile,
                    MoiExperiment::Tracking => Trajectory::Circle,
                },
                disturbance: Disturbance::None,
                inertia_override: Some(j),
                ..template.clone()
            };
            let log = run(&cfg)?;
            if let Some(reason) = &log.abort {
                return Err(SimError::Config(format!(
                    "{experiment} {converter} J={j} aborted: {reason}"
                )));
            }
            let metrics =
                metrics(&log, DEFAULT_WINDOW).map_err(|e| SimError::Config(e.to_string()))?;
            Ok(MoiRun {
                experiment,
                converter,
                inertia: j,
                metrics,
                log,
            })
        })
        .collect()
}

/// One row per (converter, inertia): RMS acceleration tracking error of the
/// profile run and of the tracking run.
pub fn write_moi_csv<W: Write>(out: W, runs: &[MoiRun]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "converter",
        "inertia",
        "profile_rms_accel_x",
        "profile_rms_accel_y",
        "profile_rms_accel_z",
        "tracking_rms_accel_x",
        "tracking_rms_accel_y",
        "tracking_rms_accel_z",
        "tracking_rms_pos_x",
        "tracking_rms_pos_y",
        "tracking_rms_pos_z",
    ])?;
    let find = |e: MoiExperiment, c: Converter, j: f64| {
        runs.iter()
            .find(|r| r.experiment == e && r.converter == c && r.inertia == j)
    };
    for r in runs
        .iter()
        .filter(|r| r.experiment == MoiExperiment::AccelProfile)
    {
        let mut rec = vec![r.converter.to_string(), r.inertia.to_string()];
        rec.extend(r.metrics.rms_accel_error.iter().map(|v| v.to_string()));
        if let Some(t) = find(MoiExperiment::Tracking, r.converter, r.inertia) {
            rec.extend(t.metrics.rms_accel_error.iter().map(|v| v.to_string()));
            rec.extend(t.metrics.rms_position_error.iter().map(|v| v.to_string()));
        } else {
            rec.extend(std::iter::repeat_n(String::new(), 6));
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hover(dob: bool) -> ScenarioConfig {
        ScenarioConfig {
            dob,
            duration: 30.0,
            ..Default::default()
        }
    }

    #[test]
    fn hover_is_equilibrium() {
        for dob in [false, true] {
            let log = run(&hover(dob)).unwrap();
            assert!(log.abort.is_none());
            let worst = log
                .rows
                .iter()
                .map(|r| (r.position - r.position_d).abs().max())
                .fold(0.0, f64::max);
            assert!(worst < 1e-3, "dob={dob} worst={worst}");
        }
    }

    #[test]
    fn deterministic() {
        let cfg = ScenarioConfig {
            trajectory: Trajectory::Circle,
            disturbance: Disturbance::default_sinusoid(),
            accel_noise: 0.05,
            seed: 9,
            duration: 8.0,
            ..Default::default()
        };
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        let mut ca = Vec::new();
        a.write_csv(&mut ca).unwrap();
        let mut cb = Vec::new();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn dob_off_leaves_command_untouched() {
        let cfg = ScenarioConfig {
            dob: false,
            disturbance: Disturbance::default_step(),
            duration: 10.0,
            ..Default::default()
        };
        let log = run(&cfg).unwrap();
        assert!(log.rows.iter().all(|r| r.force_cmd == r.force_d));
        // the estimate still runs internally
        assert!(log.rows.last().unwrap().d_hat.x > 1.0);
    }

    #[test]
    fn csv_has_header_and_all_ticks() {
        let cfg = ScenarioConfig {
            duration: 0.4,
            ..Default::default()
        };
        let log = run(&cfg).unwrap();
        assert_eq!(log.rows.len(), 100);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 31);
        assert_eq!(lines.count(), 100);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            ScenarioConfig {
                duration: 0.0,
                ..Default::default()
            },
            ScenarioConfig {
                inertia_override: Some(-1.0),
                ..Default::default()
            },
            ScenarioConfig {
                disturbance: Disturbance::Sinusoid {
                    amplitude: 8.0,
                    frequency: 0.2,
                    axes: [true; 3],
                },
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(run(&cfg), Err(SimError::Config(_))));
        }
        assert!(moi_comparison(&[0.1, -0.5], &ScenarioConfig::default()).is_err());
    }
}
