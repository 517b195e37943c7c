//! Robust stability of the DOB loop: μ upper bound versus the small-gain test,
//! and sweeps over the Q-filter time constant.

pub mod mu;
pub mod weights;

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dob::{q_horizontal, q_vertical};
use crate::linsys::{log_grid, FrequencyResponse, LinsysError, TransferFunction};
pub use mu::{mu_upper_bound, CMatrix, MuBound};
pub use weights::{w_delta_exact, w_delta_rational, w_j_at, DelayWeight, InertiaLoop, WjForm};

/// Delay bound the rational delay weight was fitted for.
pub const RATIONAL_FIT_DELAY: f64 = 0.12;
pub const GRID_POINTS: usize = 400;
pub const GRID_LO: f64 = 1e-2;
pub const GRID_HI: f64 = 1e3;
const BISECTION_TOL: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum RobustError {
    #[error("time constant must be positive and finite, got {0}")]
    BadTau(f64),
    #[error("invalid uncertainty model: {0}")]
    InvalidModel(String),
    #[error("tau range must satisfy 0 < min < max, got [{0}, {1}]")]
    BadRange(f64, f64),
    #[error("sweep needs at least 2 steps, got {0}")]
    BadSteps(usize),
    #[error("{criterion} boundary not bracketed in [{lo}, {hi}]")]
    NotBracketed {
        criterion: &'static str,
        lo: f64,
        hi: f64,
    },
    #[error(transparent)]
    Linsys(#[from] LinsysError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RobustError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Xy,
    Z,
}

impl Channel {
    /// Number of scalar uncertainty blocks: (δ, K, J) or (δ, K).
    pub fn blocks(self) -> usize {
        match self {
            Channel::Xy => 3,
            Channel::Z => 2,
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "xy" => Ok(Channel::Xy),
            "z" => Ok(Channel::Z),
            other => Err(format!("unknown channel '{other}' (expected xy|z)")),
        }
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Channel::Xy => "xy",
            Channel::Z => "z",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyModel {
    pub delay_max: f64,
    pub gain_max: f64,
    pub inertia_max: f64,
    pub delay_weight: DelayWeight,
    pub wj_form: WjForm,
    pub inertia_loop: InertiaLoop,
}

impl Default for UncertaintyModel {
    fn default() -> Self {
        Self {
            delay_max: 0.12,
            gain_max: 0.1,
            inertia_max: 0.3,
            delay_weight: DelayWeight::Rational,
            wj_form: WjForm::Pd,
            inertia_loop: InertiaLoop {
                nominal_inertia: 0.82,
                p: 3.0,
                d: 1.0,
                i: 1.0,
            },
        }
    }
}

/// Weight magnitudes at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightValues {
    pub delta: f64,
    pub gain: f64,
    pub inertia: f64,
}

impl UncertaintyModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(RobustError::InvalidModel(what.to_string()));
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.delay_max) {
            return bad("delay bound must be >= 0");
        }
        if !finite_nonneg(self.gain_max) {
            return bad("gain-error bound must be >= 0");
        }
        if !finite_nonneg(self.inertia_max) || self.inertia_max >= 1.0 {
            return bad("inertia-error bound must lie in [0, 1)");
        }
        let lp = &self.inertia_loop;
        if !(lp.nominal_inertia > 0.0 && lp.p > 0.0 && lp.d > 0.0 && lp.i >= 0.0) {
            return bad("attitude loop needs J > 0, P > 0, D > 0, I >= 0");
        }
        Ok(())
    }

    /// Delay weight magnitude. The rational fit is frequency-scaled when the
    /// delay bound differs from the one it was fitted for.
    pub fn w_delta(&self, omega: f64) -> f64 {
        match self.delay_weight {
            DelayWeight::Exact => w_delta_exact(self.delay_max, omega),
            DelayWeight::Rational => {
                if self.delay_max == 0.0 {
                    return 0.0;
                }
                let w = omega * self.delay_max / RATIONAL_FIT_DELAY;
                w_delta_rational()
                    .freq_eval(w)
                    .expect("stable denominator")
                    .norm()
            }
        }
    }

    pub fn weights_at(&self, channel: Channel, omega: f64) -> WeightValues {
        let inertia = match channel {
            Channel::Xy => w_j_at(&self.inertia_loop, self.wj_form, self.inertia_max, omega),
            Channel::Z => 0.0,
        };
        WeightValues {
            delta: self.w_delta(omega),
            gain: self.gain_max,
            inertia,
        }
    }
}

/// The default analysis grid: 400 log-spaced points over [1e-2, 1e3] rad/s.
pub fn analysis_grid() -> Vec<f64> {
    log_grid(GRID_LO, GRID_HI, GRID_POINTS)
}

/// Inertia weight envelope on a grid (identically zero for Z).
pub fn w_j_envelope(
    channel: Channel,
    u: &UncertaintyModel,
    grid: &[f64],
) -> std::result::Result<FrequencyResponse, LinsysError> {
    let values = grid
        .iter()
        .map(|&w| Complex64::new(u.weights_at(channel, w).inertia, 0.0))
        .collect();
    FrequencyResponse::new(grid.to_vec(), values)
}

/// Q-filter for a channel (`zeta` only matters for XY).
pub fn q_filter(channel: Channel, tau: f64, zeta: f64) -> Result<TransferFunction> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(RobustError::BadTau(tau));
    }
    Ok(match channel {
        Channel::Xy => q_horizontal(tau, zeta),
        Channel::Z => q_vertical(tau),
    })
}

/// `M11` for block order (δ, K, J); the Z channel keeps the (δ, K) corner.
pub fn assemble_m11(channel: Channel, q: Complex64, w: &WeightValues) -> CMatrix {
    let one = Complex64::new(1.0, 0.0);
    let ws = [w.delta, w.gain, w.inertia];
    let n = channel.blocks();
    CMatrix::from_fn(
        n,
        n,
        |i, j| {
            if j < i {
                (one - q) * ws[i]
            } else {
                -q * ws[i]
            }
        },
    )
}

/// `W_l = (1+w_J)(1+w_K)(1+w_δ) - 1`.
pub fn lumped_weight(channel: Channel, w: &WeightValues) -> f64 {
    let wj = match channel {
        Channel::Xy => w.inertia,
        Channel::Z => 0.0,
    };
    (1.0 + wj) * (1.0 + w.gain) * (1.0 + w.delta) - 1.0
}

/// `M11` on a frequency grid.
#[derive(Debug, Clone)]
pub struct LftInterconnect {
    pub channel: Channel,
    pub grid: Vec<f64>,
    pub m11: Vec<CMatrix>,
}

impl LftInterconnect {
    pub fn build(
        channel: Channel,
        tau: f64,
        zeta: f64,
        u: &UncertaintyModel,
        grid: &[f64],
    ) -> Result<Self> {
        u.validate()?;
        let q = q_filter(channel, tau, zeta)?;
        let m11 = grid
            .par_iter()
            .map(|&w| {
                let qv = q.freq_eval(w)?;
                Ok(assemble_m11(channel, qv, &u.weights_at(channel, w)))
            })
            .collect::<std::result::Result<Vec<_>, LinsysError>>()?;
        Ok(Self {
            channel,
            grid: grid.to_vec(),
            m11,
        })
    }

    /// Scalar complex blocks in order.
    pub fn structure(&self) -> &'static [&'static str] {
        match self.channel {
            Channel::Xy => &["delay", "gain", "inertia"],
            Channel::Z => &["delay", "gain"],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuResult {
    pub grid: Vec<f64>,
    pub mu_upper: Vec<f64>,
    pub peak: f64,
    pub peak_index: usize,
    pub stable: bool,
    /// False if any frequency hit the iteration cap.
    pub converged: bool,
}

impl MuResult {
    pub fn peak_omega(&self) -> f64 {
        self.grid[self.peak_index]
    }
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter().copied().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |a, (i, x)| if x > a.1 { (i, x) } else { a },
    )
}

pub fn mu_of(lft: &LftInterconnect) -> MuResult {
    let bounds: Vec<MuBound> = lft.m11.par_iter().map(mu_upper_bound).collect();
    let mu_upper: Vec<f64> = bounds.iter().map(|b| b.value).collect();
    let (peak_index, peak) = argmax(&mu_upper);
    MuResult {
        grid: lft.grid.clone(),
        peak,
        peak_index,
        stable: peak < 1.0,
        converged: bounds.iter().all(|b| b.converged),
        mu_upper,
    }
}

pub fn check_stability(
    channel: Channel,
    tau: f64,
    zeta: f64,
    u: &UncertaintyModel,
    grid: &[f64],
) -> Result<MuResult> {
    Ok(mu_of(&LftInterconnect::build(channel, tau, zeta, u, grid)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgtResult {
    pub grid: Vec<f64>,
    pub lumped_weight: Vec<f64>,
    /// `|Q(jω)| W_l(ω)`.
    pub product: Vec<f64>,
    pub peak: f64,
    pub stable: bool,
}

pub fn sgt_check(
    channel: Channel,
    tau: f64,
    zeta: f64,
    u: &UncertaintyModel,
    grid: &[f64],
) -> Result<SgtResult> {
    u.validate()?;
    let q = q_filter(channel, tau, zeta)?;
    let mut lumped = Vec::with_capacity(grid.len());
    let mut product = Vec::with_capacity(grid.len());
    for &w in grid {
        let wl = lumped_weight(channel, &u.weights_at(channel, w));
        lumped.push(wl);
        product.push(q.freq_eval(w)?.norm() * wl);
    }
    let peak = argmax(&product).1;
    Ok(SgtResult {
        grid: grid.to_vec(),
        lumped_weight: lumped,
        product,
        peak,
        stable: peak < 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub peak_mu: f64,
    pub peak_sgt: f64,
    pub stable_mu: bool,
    pub stable_sgt: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub channel: Channel,
    pub points: Vec<SweepPoint>,
    pub boundary_mu: Option<f64>,
    pub boundary_sgt: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundaries {
    pub mu: f64,
    pub sgt: f64,
}

impl SweepResult {
    pub fn boundaries(&self, lo: f64, hi: f64) -> Result<Boundaries> {
        let nb = |criterion| RobustError::NotBracketed { criterion, lo, hi };
        Ok(Boundaries {
            mu: self.boundary_mu.ok_or_else(|| nb("mu"))?,
            sgt: self.boundary_sgt.ok_or_else(|| nb("sgt"))?,
        })
    }
}

/// Bisect between an unstable `lo` and a stable `hi` for the threshold.
fn bisect(mut lo: f64, mut hi: f64, peak: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    while (hi - lo) > BISECTION_TOL * hi {
        let mid = (lo * hi).sqrt();
        if peak(mid)? < 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Locate the smallest stable τ: the last unstable → stable transition on
/// the sampled grid, refined by bisection.
fn refine(
    points: &[SweepPoint],
    stable: impl Fn(&SweepPoint) -> bool,
    peak: impl Fn(f64) -> Result<f64>,
) -> Result<Option<f64>> {
    let last = points.last().expect("at least two points");
    if !stable(last) {
        return Ok(None);
    }
    match points
        .windows(2)
        .rposition(|w| !stable(&w[0]) && stable(&w[1]))
    {
        Some(i) => Ok(Some(bisect(points[i].tau, points[i + 1].tau, peak)?)),
        None => Ok(None),
    }
}

/// Log-spaced τ sweep with bisection refinement of both boundaries.
pub fn tau_sweep(
    channel: Channel,
    tau_min: f64,
    tau_max: f64,
    steps: usize,
    zeta: f64,
    u: &UncertaintyModel,
    grid: &[f64],
) -> Result<SweepResult> {
    if !(tau_min > 0.0 && tau_max > tau_min && tau_max.is_finite()) {
        return Err(RobustError::BadRange(tau_min, tau_max));
    }
    if steps < 2 {
        return Err(RobustError::BadSteps(steps));
    }
    u.validate()?;
    let mut converged = true;
    let mut points = Vec::with_capacity(steps);
    for tau in log_grid(tau_min, tau_max, steps) {
        let m = check_stability(channel, tau, zeta, u, grid)?;
        let s = sgt_check(channel, tau, zeta, u, grid)?;
        converged &= m.converged;
        points.push(SweepPoint {
            tau,
            peak_mu: m.peak,
            peak_sgt: s.peak,
            stable_mu: m.stable,
            stable_sgt: s.stable,
        });
    }
    let boundary_mu = refine(
        &points,
        |p| p.stable_mu,
        |t| Ok(check_stability(channel, t, zeta, u, grid)?.peak),
    )?;
    let boundary_sgt = refine(
        &points,
        |p| p.stable_sgt,
        |t| Ok(sgt_check(channel, t, zeta, u, grid)?.peak),
    )?;
    Ok(SweepResult {
        channel,
        points,
        boundary_mu,
        boundary_sgt,
        converged,
    })
}

/// Columns: tau, peak_mu, peak_sgt, stable_mu, stable_sgt.
pub fn write_sweep_csv<W: Write>(out: W, sweep: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &sweep.points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: omega, mu_upper, sgt_product.
pub fn write_curves_csv<W: Write>(out: W, mu: &MuResult, sgt: &SgtResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["omega", "mu_upper", "sgt_product"])?;
    for ((om, m), s) in mu.grid.iter().zip(&mu.mu_upper).zip(&sgt.product) {
        w.write_record([om.to_string(), m.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
