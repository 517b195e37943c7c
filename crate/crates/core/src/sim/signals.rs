//! Reference trajectories and injected disturbance forces.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::conversion::Reference;

/// Time constant of the pull-release smoothing lag (s).
pub const PULL_RELEASE_LAG: f64 = 0.2;
/// Default cap for the sinusoid amplitude (m/s^2).
pub const SINUSOID_AMPLITUDE_CAP: f64 = 5.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleParams {
    /// m
    pub radius: f64,
    /// m above ground (z_d = -height)
    pub height: f64,
    /// s per revolution
    pub period: f64,
}

impl Default for CircleParams {
    fn default() -> Self {
        Self {
            radius: 3.0,
            height: 5.0,
            period: 12.0,
        }
    }
}

/// Open-loop acceleration profile: sinusoids on each axis, horizontal
/// axes in quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccelProfileParams {
    /// m/s^2
    pub horizontal: f64,
    /// m/s^2
    pub vertical: f64,
    /// rad/s
    pub omega: f64,
    /// m above ground at the start
    pub height: f64,
}

impl Default for AccelProfileParams {
    fn default() -> Self {
        Self {
            horizontal: 0.8,
            vertical: 2.5,
            omega: 0.5,
            height: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trajectory {
    Hover,
    Circle,
    AccelProfile,
}

impl FromStr for Trajectory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hover" => Ok(Self::Hover),
            "circle" => Ok(Self::Circle),
            "accel-profile" => Ok(Self::AccelProfile),
            other => Err(format!(
                "unknown scenario '{other}' (expected hover|circle|accel-profile)"
            )),
        }
    }
}

impl std::fmt::Display for Trajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Hover => "hover",
            Self::Circle => "circle",
            Self::AccelProfile => "accel-profile",
        })
    }
}

/// Counter-clockwise circle (seen from above) starting at `(r, 0, -h)`.
pub fn circle_reference(t: f64, p: &CircleParams) -> Reference {
    let w = TAU / p.period;
    let (s, c) = (w * t).sin_cos();
    let r = p.radius;
    Reference {
        position: Vector3::new(r * c, r * s, -p.height),
        velocity: Vector3::new(-r * w * s, r * w * c, 0.0),
        accel: Vector3::new(-r * w * w * c, -r * w * w * s, 0.0),
    }
}

pub fn hover_reference(height: f64) -> Reference {
    Reference {
        position: Vector3::new(0.0, 0.0, -height),
        ..Default::default()
    }
}

/// Analytic double integral of the profile; `accel` is what gets commanded.
pub fn accel_profile_reference(t: f64, p: &AccelProfileParams) -> Reference {
    let w = p.omega;
    let phase = [0.0, PI / 2.0, 0.0];
    let amp = [p.horizontal, p.horizontal, p.vertical];
    let base = Vector3::new(0.0, 0.0, -p.height);
    let mut r = Reference {
        position: base,
        ..Default::default()
    };
    for i in 0..3 {
        let (s, c) = (w * t + phase[i]).sin_cos();
        r.accel[i] = amp[i] * s;
        r.velocity[i] = -amp[i] * c / w;
        r.position[i] += -amp[i] * s / (w * w);
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Disturbance {
    None,
    /// Per-axis `m a sin(2π f t + φ_i)` with phases 0, 2π/3, 4π/3.
    Sinusoid {
        /// m/s^2
        amplitude: f64,
        /// Hz
        frequency: f64,
        axes: [bool; 3],
    },
    /// Constant force from `start` on.
    Step {
        force: [f64; 3],
        start: f64,
    },
    /// Half-duty square pulse on one axis through a first-order lag.
    PullRelease {
        force: f64,
        period: f64,
        axis: usize,
    },
}

impl Disturbance {
    pub fn default_sinusoid() -> Self {
        Self::Sinusoid {
            amplitude: SINUSOID_AMPLITUDE_CAP,
            frequency: 0.2,
            axes: [true; 3],
        }
    }

    pub fn default_step() -> Self {
        Self::Step {
            force: [6.0, 0.0, 0.0],
            start: 5.0,
        }
    }

    pub fn default_pull_release() -> Self {
        Self::PullRelease {
            force: 5.0,
            period: 6.0,
            axis: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Self::None => true,
            Self::Sinusoid {
                amplitude,
                frequency,
                ..
            } => (0.0..=SINUSOID_AMPLITUDE_CAP).contains(&amplitude) && frequency > 0.0,
            Self::Step { force, start } => force.iter().all(|f| f.is_finite()) && start >= 0.0,
            Self::PullRelease {
                force,
                period,
                axis,
            } => force.is_finite() && period > 0.0 && axis < 3,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid disturbance {self:?}"))
        }
    }
}

fn parse_axis(s: &str) -> Result<usize, String> {
    match s {
        "x" => Ok(0),
        "y" => Ok(1),
        "z" => Ok(2),
        other => Err(format!("unknown axis '{other}'")),
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse().map_err(|_| format!("not a number: '{s}'"))
}

/// `none`, `sinusoid[:amp[:freq]]`, `step[:fx,fy,fz[@start]]`,
/// `pull-release[:force[:period[:axis]]]`.
impl FromStr for Disturbance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let d = match kind {
            "none" if args.is_empty() => Self::None,
            "sinusoid" if args.len() <= 2 => {
                let Self::Sinusoid {
                    mut amplitude,
                    mut frequency,
                    axes,
                } = Self::default_sinusoid()
                else {
                    unreachable!()
                };
                if let Some(a) = args.first() {
                    amplitude = parse_f64(a)?;
                }
                if let Some(f) = args.get(1) {
                    frequency = parse_f64(f)?;
                }
                Self::Sinusoid {
                    amplitude,
                    frequency,
                    axes,
                }
            }
            "step" if args.len() <= 1 => match args.first() {
                None => Self::default_step(),
                Some(spec) => {
                    let (vec, start) = match spec.split_once('@') {
                        Some((v, st)) => (v, parse_f64(st)?),
                        None => (*spec, 5.0),
                    };
                    let comps = vec
                        .split(',')
                        .map(parse_f64)
                        .collect::<Result<Vec<_>, _>>()?;
                    let force: [f64; 3] = comps
                        .try_into()
                        .map_err(|_| "step force needs three components".to_string())?;
                    Self::Step { force, start }
                }
            },
            "pull-release" if args.len() <= 3 => {
                let Self::PullRelease {
                    mut force,
                    mut period,
                    mut axis,
                } = Self::default_pull_release()
                else {
                    unreachable!()
                };
                if let Some(f) = args.first() {
                    force = parse_f64(f)?;
                }
                if let Some(p) = args.get(1) {
                    period = parse_f64(p)?;
                }
                if let Some(a) = args.get(2) {
                    axis = parse_axis(a)?;
                }
                Self::PullRelease {
                    force,
                    period,
                    axis,
                }
            }
            _ => return Err(format!("invalid disturbance spec '{s}'")),
        };
        d.validate()?;
        Ok(d)
    }
}

/// Injected force (N, earth frame) at time `t`.
pub fn disturbance_signal(kind: &Disturbance, t: f64, mass: f64) -> Vector3<f64> {
    match *kind {
        Disturbance::None => Vector3::zeros(),
        Disturbance::Sinusoid {
            amplitude,
            frequency,
            axes,
        } => Vector3::from_fn(|i, _| {
            if axes[i] {
                let phase = TAU * i as f64 / 3.0;
                mass * amplitude * (TAU * frequency * t + phase).sin()
            } else {
                0.0
            }
        }),
        Disturbance::Step { force, start } => {
            if t >= start {
                Vector3::from(force)
            } else {
                Vector3::zeros()
            }
        }
        Disturbance::PullRelease {
            force,
            period,
            axis,
        } => {
            let mut d = Vector3::zeros();
            d[axis] = force * pull_release_shape(t, period);
            d
        }
    }
}

/// Lag-filtered 0/1 square wave, high for the first half of each period.
fn pull_release_shape(t: f64, period: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let half = period / 2.0;
    let last = (t / half).floor() as i64;
    let settled = if last % 2 == 0 { 1.0 } else { 0.0 };
    // residual transients of recent edges; edge k has sign (-1)^k
    let horizon = (40.0 * PULL_RELEASE_LAG / half).ceil() as i64;
    let residual: f64 = ((last - horizon).max(0)..=last)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * (-(t - k as f64 * half) / PULL_RELEASE_LAG).exp()
        })
        .sum();
    settled - residual
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn circle_start_and_kinematics() {
        let p = CircleParams::default();
        let r0 = circle_reference(0.0, &p);
        assert_relative_eq!(r0.position, Vector3::new(3.0, 0.0, -5.0), epsilon = 1e-15);
        let w: f64 = TAU / 12.0;
        for &t in &[0.0, 1.3, 7.7] {
            let r = circle_reference(t, &p);
            assert_relative_eq!(r.accel.norm(), 3.0 * w * w, epsilon = 1e-12);
            let h = 1e-5;
            let fd = (circle_reference(t + h, &p).position - circle_reference(t - h, &p).position)
                / (2.0 * h);
            assert_relative_eq!(fd, r.velocity, epsilon = 1e-8);
        }
        assert_relative_eq!(3.0 * w * w, 0.8225, epsilon = 1e-4);
    }

    #[test]
    fn accel_profile_derivatives_consistent() {
        let p = AccelProfileParams::default();
        let h = 1e-4;
        for &t in &[0.0, 2.0, 9.1] {
            let r = accel_profile_reference(t, &p);
            let fv = (accel_profile_reference(t + h, &p).velocity
                - accel_profile_reference(t - h, &p).velocity)
                / (2.0 * h);
            assert_relative_eq!(fv, r.accel, epsilon = 1e-6);
            let fp = (accel_profile_reference(t + h, &p).position
                - accel_profile_reference(t - h, &p).position)
                / (2.0 * h);
            assert_relative_eq!(fp, r.velocity, epsilon = 1e-6);
        }
    }

    #[test]
    fn disturbance_kinds() {
        assert_eq!(
            disturbance_signal(&Disturbance::None, 3.0, 3.24),
            Vector3::zeros()
        );
        let s = Disturbance::default_sinusoid();
        let peak = (0..5000)
            .map(|k| disturbance_signal(&s, k as f64 * 1e-3, 3.24).x.abs())
            .fold(0.0, f64::max);
        assert_relative_eq!(peak, 17.82, epsilon = 1e-3);
        let st = Disturbance::default_step();
        assert_eq!(disturbance_signal(&st, 4.999, 3.24), Vector3::zeros());
        assert_eq!(
            disturbance_signal(&st, 5.0, 3.24),
            Vector3::new(6.0, 0.0, 0.0)
        );
    }

    #[test]
    fn pull_release_matches_lag_integration() {
        let (force, period) = (5.0, 6.0);
        let d = Disturbance::PullRelease {
            force,
            period,
            axis: 0,
        };
        // exact discretization of the first-order lag driven by the square wave
        let dt = 1e-3;
        let a = (-dt / PULL_RELEASE_LAG).exp();
        let mut y = 0.0;
        for k in 1..=30_000 {
            let u = if (k - 1) % 6000 < 3000 { force } else { 0.0 };
            y = a * y + (1.0 - a) * u;
            let t = k as f64 * dt;
            assert!((disturbance_signal(&d, t, 1.0).x - y).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn parse_specs() {
        assert_eq!("none".parse::<Disturbance>().unwrap(), Disturbance::None);
        assert_eq!(
            "sinusoid".parse::<Disturbance>().unwrap(),
            Disturbance::default_sinusoid()
        );
        assert_eq!(
            "step:1,2,3@2".parse::<Disturbance>().unwrap(),
            Disturbance::Step {
                force: [1.0, 2.0, 3.0],
                start: 2.0
            }
        );
        assert_eq!(
            "pull-release:4:8:y".parse::<Disturbance>().unwrap(),
            Disturbance::PullRelease {
                force: 4.0,
                period: 8.0,
                axis: 1
            }
        );
        assert!("sinusoid:9".parse::<Disturbance>().is_err());
        assert!("gust".parse::<Disturbance>().is_err());
        assert!("step:1,2".parse::<Disturbance>().is_err());
    }
}
