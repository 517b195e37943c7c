//! Real-rational SISO transfer functions, frequency responses and their
//! bilinear (Tustin) realization as discrete filters.
//!
//! Polynomials are dense coefficient vectors in descending powers of `s`
//! (or of `z^-1` for discrete filters). No pole-zero cancellation is ever
//! performed implicitly.

use num_complex::Complex64;
use thiserror::Error;

/// Relative tolerance used to declare `den(jw)` zero.
pub const POLE_ON_AXIS_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinsysError {
    #[error("coefficient list must be nonempty")]
    EmptyPolynomial,
    #[error("denominator polynomial is identically zero")]
    ZeroDenominator,
    #[error("non-finite coefficient in polynomial")]
    NonFinite,
    #[error("frequency must be >= 0, got {0}")]
    NegativeFrequency(f64),
    #[error("pole on the imaginary axis at w = {0} rad/s")]
    PoleOnAxis(f64),
    #[error("degenerate feedback: 1 + a*b is identically zero")]
    DegenerateFeedback,
    #[error(
        "transfer function is improper (relative degree {0}); pre-multiply by a Q-filter \
         of sufficient relative degree before discretizing"
    )]
    Improper(i64),
    #[error("sample period must be positive, got {0}")]
    BadSamplePeriod(f64),
    #[error("frequency grid and values differ in length ({grid} vs {values})")]
    LengthMismatch { grid: usize, values: usize },
    #[error("frequency grid must be strictly increasing (index {0})")]
    NonMonotoneGrid(usize),
}

pub type Result<T> = std::result::Result<T, LinsysError>;

fn trim_leading_zeros(mut c: Vec<f64>) -> Vec<f64> {
    let first = c.iter().position(|&x| x != 0.0).unwrap_or(c.len() - 1);
    c.drain(..first);
    c
}

/// Product of two descending-power polynomials.
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Sum of two descending-power polynomials (aligned at the constant term).
pub fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (k, &x) in a.iter().rev().enumerate() {
        out[n - 1 - k] += x;
    }
    for (k, &x) in b.iter().rev().enumerate() {
        out[n - 1 - k] += x;
    }
    out
}

/// Horner evaluation at a complex point.
pub fn poly_eval(c: &[f64], s: Complex64) -> Complex64 {
    c.iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &x| acc * s + x)
}

/// Real-rational SISO transfer function `num(s) / den(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

/// How two transfer functions are combined by [`compose`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composition {
    Series,
    Parallel,
    NegativeFeedback,
}

impl TransferFunction {
    /// Builds `num/den`. Leading zero coefficients are dropped so that the
    /// leading denominator coefficient is nonzero.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return Err(LinsysError::EmptyPolynomial);
        }
        if num.iter().chain(den.iter()).any(|x| !x.is_finite()) {
            return Err(LinsysError::NonFinite);
        }
        if den.iter().all(|&x| x == 0.0) {
            return Err(LinsysError::ZeroDenominator);
        }
        Ok(Self {
            num: trim_leading_zeros(num),
            den: trim_leading_zeros(den),
        })
    }

    pub fn constant(k: f64) -> Self {
        Self {
            num: vec![k],
            den: vec![1.0],
        }
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    fn degree(c: &[f64]) -> i64 {
        if c.iter().all(|&x| x == 0.0) {
            0
        } else {
            c.len() as i64 - 1
        }
    }

    /// `deg(den) - deg(num)`; negative for improper transfer functions.
    pub fn relative_degree(&self) -> i64 {
        Self::degree(&self.den) - Self::degree(&self.num)
    }

    pub fn is_proper(&self) -> bool {
        self.relative_degree() >= 0
    }

    /// Evaluates at an arbitrary complex point without pole checks.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }

    /// Evaluates at `s = jw`.
    pub fn freq_eval(&self, omega: f64) -> Result<Complex64> {
        if !(omega >= 0.0) {
            return Err(LinsysError::NegativeFrequency(omega));
        }
        let s = Complex64::new(0.0, omega);
        let d = poly_eval(&self.den, s);
        let scale = self.den.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if d.norm() < POLE_ON_AXIS_TOL * scale {
            return Err(LinsysError::PoleOnAxis(omega));
        }
        Ok(poly_eval(&self.num, s) / d)
    }

    /// Value at `s = 0`.
    pub fn dc_gain(&self) -> Result<f64> {
        Ok(self.freq_eval(0.0)?.re)
    }

    /// `den/num`. Fails when the numerator is identically zero.
    pub fn inverse(&self) -> Result<Self> {
        Self::new(self.den.clone(), self.num.clone())
    }

    pub fn series(&self, other: &Self) -> Self {
        Self {
            num: poly_mul(&self.num, &other.num),
            den: poly_mul(&self.den, &other.den),
        }
    }

    pub fn parallel(&self, other: &Self) -> Self {
        let num = poly_add(
            &poly_mul(&self.num, &other.den),
            &poly_mul(&other.num, &self.den),
        );
        Self {
            num: trim_leading_zeros(num),
            den: poly_mul(&self.den, &other.den),
        }
    }

    /// Closes `self` in a negative-feedback loop with `feedback` on the
    /// return path: `a / (1 + a b)`.
    pub fn feedback(&self, feedback: &Self) -> Result<Self> {
        let num = poly_mul(&self.num, &feedback.den);
        let den = poly_add(
            &poly_mul(&self.den, &feedback.den),
            &poly_mul(&self.num, &feedback.num),
        );
        if den.iter().all(|&x| x == 0.0) {
            return Err(LinsysError::DegenerateFeedback);
        }
        Self::new(num, den)
    }

    /// Scales the numerator.
    pub fn scale(&self, k: f64) -> Self {
        Self {
            num: self.num.iter().map(|x| x * k).collect(),
            den: self.den.clone(),
        }
    }
}

/// Combines two transfer functions.
pub fn compose(
    a: &TransferFunction,
    b: &TransferFunction,
    mode: Composition,
) -> Result<TransferFunction> {
    match mode {
        Composition::Series => Ok(a.series(b)),
        Composition::Parallel => Ok(a.parallel(b)),
        Composition::NegativeFeedback => a.feedback(b),
    }
}

/// Complex samples of a frequency response on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    grid: Vec<f64>,
    values: Vec<Complex64>,
}

impl FrequencyResponse {
    pub fn new(grid: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(LinsysError::LengthMismatch {
                grid: grid.len(),
                values: values.len(),
            });
        }
        if let Some(i) = grid.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(LinsysError::NonMonotoneGrid(i + 1));
        }
        Ok(Self { grid, values })
    }

    /// Samples `tf` on `grid`.
    pub fn from_tf(tf: &TransferFunction, grid: &[f64]) -> Result<Self> {
        let values = grid
            .iter()
            .map(|&w| tf.freq_eval(w))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid.to_vec(), values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2, "invalid log grid");
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Direct-form II transposed IIR filter in `z^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFilter {
    b: Vec<f64>,
    a: Vec<f64>,
    state: Vec<f64>,
    dt: f64,
}

impl DiscreteFilter {
    /// Builds a filter from `z^-1` coefficients; `a[0]` is normalized to 1.
    pub fn new(b: Vec<f64>, a: Vec<f64>, dt: f64) -> Result<Self> {
        if b.is_empty() || a.is_empty() {
            return Err(LinsysError::EmptyPolynomial);
        }
        if a[0] == 0.0 {
            return Err(LinsysError::ZeroDenominator);
        }
        if !(dt > 0.0) {
            return Err(LinsysError::BadSamplePeriod(dt));
        }
        let n = b.len().max(a.len());
        let a0 = a[0];
        let mut bn: Vec<f64> = b.iter().map(|x| x / a0).collect();
        let mut an: Vec<f64> = a.iter().map(|x| x / a0).collect();
        bn.resize(n, 0.0);
        an.resize(n, 0.0);
        Ok(Self {
            b: bn,
            a: an,
            state: vec![0.0; n - 1],
            dt,
        })
    }

    pub fn numerator(&self) -> &[f64] {
        &self.b
    }

    pub fn denominator(&self) -> &[f64] {
        &self.a
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Gain at `z = 1`.
    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|x| *x = 0.0);
    }

    /// Advances the difference equation by one sample.
    pub fn step(&mut self, u: f64) -> f64 {
        let y = self.b[0] * u + self.state.first().copied().unwrap_or(0.0);
        let n = self.state.len();
        for i in 0..n {
            let next = if i + 1 < n { self.state[i + 1] } else { 0.0 };
            self.state[i] = next + self.b[i + 1] * u - self.a[i + 1] * y;
        }
        y
    }
}

/// Tustin substitution `s <- (2/dt)(1 - z^-1)/(1 + z^-1)` without prewarping.
pub fn discretize_bilinear(tf: &TransferFunction, dt: f64) -> Result<DiscreteFilter> {
    if !(dt > 0.0) {
        return Err(LinsysError::BadSamplePeriod(dt));
    }
    if !tf.is_proper() {
        return Err(LinsysError::Improper(tf.relative_degree()));
    }
    let n = tf.den.len() - 1;
    let c = 2.0 / dt;
    // (1 - z^-1)^k (1 + z^-1)^(n-k), ascending powers of z^-1
    let basis = |k: usize| -> Vec<f64> {
        let mut p = vec![1.0];
        for _ in 0..k {
            p = poly_mul(&p, &[1.0, -1.0]);
        }
        for _ in k..n {
            p = poly_mul(&p, &[1.0, 1.0]);
        }
        p
    };
    let map = |coeffs: &[f64]| -> Vec<f64> {
        let deg = coeffs.len() - 1;
        let mut out = vec![0.0; n + 1];
        for (i, &x) in coeffs.iter().enumerate() {
            let k = deg - i;
            let scale = x * c.powi(k as i32);
            for (j, v) in basis(k).into_iter().enumerate() {
                out[j] += scale * v;
            }
        }
        out
    };
    DiscreteFilter::new(map(&tf.num), map(&tf.den), dt)
}
