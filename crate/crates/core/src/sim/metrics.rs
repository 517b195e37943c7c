//! Steady-state error statistics over a run log.

use std::io::Write;

use nalgebra::Vector3;
use thiserror::Error;

use super::RunLog;

/// Seconds discarded at the start of a run.
pub const DEFAULT_WINDOW: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty run log")]
    Empty,
    #[error("discard window {window} s leaves no samples in a {length} s log")]
    WindowTooLong { window: f64, length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rms_position_error: Vector3<f64>,
    pub rms_accel_error: Vector3<f64>,
    /// Largest Euclidean position error.
    pub max_position_error: f64,
    /// RMS of `d_hat - d` per axis.
    pub rms_estimate_error: Vector3<f64>,
    /// RMS of the injected disturbance per axis.
    pub rms_disturbance: Vector3<f64>,
    pub samples: usize,
}

fn rms(it: impl Iterator<Item = Vector3<f64>>) -> Vector3<f64> {
    let mut n = 0usize;
    let sum = it.fold(Vector3::zeros(), |acc, v| {
        n += 1;
        acc + v.component_mul(&v)
    });
    (sum / n as f64).map(f64::sqrt)
}

/// RMS statistics over samples with `t >= discard`.
pub fn metrics(log: &RunLog, discard: f64) -> Result<Metrics, MetricsError> {
    if log.rows.is_empty() {
        return Err(MetricsError::Empty);
    }
    let rows: Vec<_> = log.rows.iter().filter(|r| r.t >= discard).collect();
    if rows.is_empty() {
        return Err(MetricsError::WindowTooLong {
            window: discard,
            length: log.rows.len() as f64 * log.dt,
        });
    }
    Ok(Metrics {
        rms_position_error: rms(rows.iter().map(|r| r.position - r.position_d)),
        rms_accel_error: rms(rows.iter().map(|r| r.accel - r.accel_d)),
        max_position_error: rows
            .iter()
            .map(|r| (r.position - r.position_d).norm())
            .fold(0.0, f64::max),
        rms_estimate_error: rms(rows.iter().map(|r| r.d_hat - r.disturbance)),
        rms_disturbance: rms(rows.iter().map(|r| r.disturbance)),
        samples: rows.len(),
    })
}

impl Metrics {
    fn pairs(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let axes = ["x", "y", "z"];
        for (name, v) in [
            ("rms_pos", &self.rms_position_error),
            ("rms_accel", &self.rms_accel_error),
            ("rms_dhat_err", &self.rms_estimate_error),
            ("rms_dist", &self.rms_disturbance),
        ] {
            for (a, x) in axes.iter().zip(v.iter()) {
                out.push((format!("{name}_{a}"), *x));
            }
        }
        out.push(("max_pos_err".into(), self.max_position_error));
        out.push(("samples".into(), self.samples as f64));
        out
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        self.pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Header row of keys, then one row of values.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let pairs = self.pairs();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(pairs.iter().map(|(k, _)| k.as_str()))?;
        w.write_record(pairs.iter().map(|(_, v)| v.to_string()))?;
        w.flush()?;
        Ok(())
    }
}
