//! Uncertainty weights: time delay, DC gain and roll/pitch inertia.

use serde::{Deserialize, Serialize};

use crate::linsys::TransferFunction;

/// Number of inertia-error samples used when maximizing the inertia weight.
pub const INERTIA_SAMPLES: usize = 61;

/// `max_{|δ| <= δmax} |e^{-jωδ} - 1|`.
pub fn w_delta_exact(delay_max: f64, omega: f64) -> f64 {
    let x = omega * delay_max;
    if x <= std::f64::consts::PI {
        2.0 * (x / 2.0).sin().abs()
    } else {
        2.0
    }
}

/// Third-order rational upper bound of the delay envelope for `δmax = 0.12`.
pub fn w_delta_rational() -> TransferFunction {
    TransferFunction::new(
        vec![2.015, 52.88, 431.6, 0.415],
        vec![1.0, 36.7, 606.8, 3521.0],
    )
    .expect("constant coefficients")
}

/// Which delay weight the analysis uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayWeight {
    /// The fitted third-order transfer function (valid for `δmax = 0.12`).
    Rational,
    /// `2|sin(ωδmax/2)|`, saturating at 2.
    Exact,
}

/// Algebraic form of the inertia weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WjForm {
    /// `-J̄ JΔ s² / (J̄(1+JΔ) s² + D s + P)`, consistent with the PD attitude loop.
    Pd,
    /// `-J̄ JΔ s³ / (J̄(1+JΔ) s³ + D s² + P s + I)`, the PID-loop form.
    Paper,
}

impl std::str::FromStr for WjForm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pd" => Ok(Self::Pd),
            "paper" => Ok(Self::Paper),
            other => Err(format!("unknown W_J form '{other}' (expected pd|paper)")),
        }
    }
}

/// Attitude-loop parameters entering the inertia weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaLoop {
    pub nominal_inertia: f64,
    pub p: f64,
    pub d: f64,
    /// Only used by [`WjForm::Paper`].
    pub i: f64,
}

/// `|Λ_n/Λ_nn - 1|` for a single inertia error at `s = jω`.
pub fn inertia_deviation(lp: &InertiaLoop, form: WjForm, inertia_error: f64, omega: f64) -> f64 {
    use num_complex::Complex64;
    let s = Complex64::new(0.0, omega);
    let jb = lp.nominal_inertia;
    let je = jb * (1.0 + inertia_error);
    match form {
        WjForm::Pd => {
            let s2 = s * s;
            (-(jb * inertia_error) * s2 / (je * s2 + lp.d * s + lp.p)).norm()
        }
        WjForm::Paper => {
            let s2 = s * s;
            let s3 = s2 * s;
            (-(jb * inertia_error) * s3 / (je * s3 + lp.d * s2 + lp.p * s + lp.i)).norm()
        }
    }
}

/// Inertia weight magnitude at `ω`: maximum over a uniform grid of
/// inertia errors in `[-max, max]`.
pub fn w_j_at(lp: &InertiaLoop, form: WjForm, inertia_error_max: f64, omega: f64) -> f64 {
    if inertia_error_max == 0.0 {
        return 0.0;
    }
    (0..INERTIA_SAMPLES)
        .map(|k| {
            let e = -inertia_error_max
                + 2.0 * inertia_error_max * k as f64 / (INERTIA_SAMPLES - 1) as f64;
            inertia_deviation(lp, form, e, omega)
        })
        .fold(0.0, f64::max)
}
