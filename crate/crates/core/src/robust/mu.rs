//! Structured singular value upper bound for scalar complex blocks.
//!
//! `μ(M) <= inf_D σ̄(D M D^-1)` over positive diagonal `D`, with the last
//! scaling pinned to 1. The infimum is searched by coordinate descent on
//! `log d_i`; `σ̄(e^X M e^-X)` is convex in diagonal `X`, so each coordinate
//! is minimized by golden-section search.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

pub type CMatrix = DMatrix<Complex64>;

/// Iteration cap for the coordinate descent.
pub const MAX_SWEEPS: usize = 200;
/// Relative improvement below which the descent stops.
pub const REL_TOL: f64 = 1e-8;
/// Bound on `|log d_i|`.
const LOG_SCALE_BOUND: f64 = 25.0;
const GOLDEN_ITERS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct MuBound {
    pub value: f64,
    /// Optimal diagonal scaling (last entry 1).
    pub scaling: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Largest singular value via SVD.
pub fn max_singular_value(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Up to 3x3 matrix on the stack, zero padded.
type Small = [[Complex64; 3]; 3];

fn to_small(m: &CMatrix) -> Small {
    let mut a = [[Complex64::new(0.0, 0.0); 3]; 3];
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            a[i][j] = m[(i, j)];
        }
    }
    a
}

/// Largest singular value of a padded matrix via the closed-form largest
/// eigenvalue of the Hermitian `M^H M`.
fn small_sigma_max(m: &Small) -> f64 {
    let mut a = [[Complex64::new(0.0, 0.0); 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let mut acc = Complex64::new(0.0, 0.0);
            for row in m {
                acc += row[i].conj() * row[j];
            }
            a[i][j] = acc;
        }
    }
    let d = [a[0][0].re, a[1][1].re, a[2][2].re];
    let (x, y, z) = (a[0][1], a[0][2], a[1][2]);
    let off = x.norm_sqr() + y.norm_sqr() + z.norm_sqr();
    let q = (d[0] + d[1] + d[2]) / 3.0;
    let p2 = d.iter().map(|v| (v - q).powi(2)).sum::<f64>() + 2.0 * off;
    let lam = if p2 <= f64::EPSILON * q.abs().max(f64::MIN_POSITIVE) {
        q
    } else {
        let p = (p2 / 6.0).sqrt();
        let (b0, b1, b2) = (d[0] - q, d[1] - q, d[2] - q);
        // det(A - qI) for Hermitian A
        let det = b0 * b1 * b2 + 2.0 * (x * z * y.conj()).re
            - b0 * z.norm_sqr()
            - b1 * y.norm_sqr()
            - b2 * x.norm_sqr();
        let r = (det / (2.0 * p * p * p)).clamp(-1.0, 1.0);
        q + 2.0 * p * (r.acos() / 3.0).cos()
    };
    lam.max(0.0).sqrt()
}

/// `σ̄(D M D^-1)` with `D = diag(e^x_0, .., e^x_{n-2}, 1)`.
fn scaled_sigma(m: &Small, n: usize, log_d: &[f64]) -> f64 {
    let mut e = [1.0; 3];
    for (k, v) in log_d.iter().enumerate() {
        e[k] = v.exp();
    }
    let mut s = *m;
    for i in 0..n {
        for j in 0..n {
            s[i][j] *= e[i] / e[j];
        }
    }
    small_sigma_max(&s)
}

fn scaled(m: &CMatrix, log_d: &[f64]) -> CMatrix {
    let n = m.nrows();
    let d = |i: usize| if i + 1 == n { 0.0 } else { log_d[i] };
    CMatrix::from_fn(n, n, |i, j| m[(i, j)] * (d(i) - d(j)).exp())
}

fn golden_min(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// D-scaled upper bound on μ for a structure of `n` scalar complex blocks.
pub fn mu_upper_bound(m: &CMatrix) -> MuBound {
    assert!(m.is_square(), "M11 must be square");
    let n = m.nrows();
    if n <= 1 {
        return MuBound {
            value: max_singular_value(m),
            scaling: vec![1.0; n],
            sweeps: 0,
            converged: true,
        };
    }
    let small = (n <= 3).then(|| to_small(m));
    let sigma = |log_d: &[f64]| match &small {
        Some(a) => scaled_sigma(a, n, log_d),
        None => max_singular_value(&scaled(m, log_d)),
    };
    let mut x = vec![0.0; n - 1];
    let mut best = sigma(&x);
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let before = best;
        let start = x.clone();
        for i in 0..n - 1 {
            let (xi, fi) = golden_min(-LOG_SCALE_BOUND, LOG_SCALE_BOUND, |v| {
                let mut trial = x.clone();
                trial[i] = v;
                sigma(&trial)
            });
            if fi < best {
                best = fi;
                x[i] = xi;
            }
        }
        // pattern move along the net displacement of the sweep
        let dir: Vec<f64> = x.iter().zip(&start).map(|(a, b)| a - b).collect();
        let span = dir.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if n > 2 && span > 0.0 {
            let reach = LOG_SCALE_BOUND / span;
            let along =
                |t: f64| -> Vec<f64> { x.iter().zip(&dir).map(|(a, d)| a + t * d).collect() };
            let (t, ft) = golden_min(0.0, reach.min(64.0), |t| sigma(&along(t)));
            if ft < best {
                best = ft;
                x = along(t);
            }
        }
        if before <= 0.0 || (before - best) / before < REL_TOL {
            converged = true;
            break;
        }
    }
    let value = max_singular_value(&scaled(m, &x)).min(max_singular_value(m));
    let mut scaling: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    scaling.push(1.0);
    MuBound {
        value,
        scaling,
        sweeps,
        converged,
    }
}

/// Spectral radius, a lower bound on μ for any block structure.
pub fn spectral_radius(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let n = m.nrows();
    let t = m.clone().schur().unpack().1;
    (0..n).map(|i| t[(i, i)].norm()).fold(0.0, f64::max)
}

/// `det(I - M diag(delta))`.
pub fn det_i_minus_m_delta(m: &CMatrix, delta: &[Complex64]) -> Complex64 {
    let n = m.nrows();
    let a = CMatrix::from_fn(n, n, |i, j| {
        let eye = if i == j { 1.0 } else { 0.0 };
        Complex64::new(eye, 0.0) - m[(i, j)] * delta[j]
    });
    a.determinant()
}

/// Random structured perturbation with every scalar block inside the disc
/// of the given radius (so `σ̄(Δ) <= radius`).
pub fn random_delta<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Vec<Complex64> {
    (0..n)
        .map(|_| {
            let r = radius * rng.random::<f64>();
            let phase = std::f64::consts::TAU * rng.random::<f64>();
            Complex64::from_polar(r, phase)
        })
        .collect()
}

/// Random phase search for a destabilizing perturbation with `σ̄(Δ) <= 1`.
///
/// For a diagonal unitary `U`, any eigenvalue `λ` of `M U` with `|λ| >= 1`
/// yields `Δ = U / λ` with `det(I - M Δ) = 0`.
pub fn find_destabilizing<R: Rng + ?Sized>(
    m: &CMatrix,
    draws: usize,
    rng: &mut R,
) -> Option<Vec<Complex64>> {
    let n = m.nrows();
    for _ in 0..draws {
        let u: Vec<Complex64> = (0..n)
            .map(|_| Complex64::from_polar(1.0, std::f64::consts::TAU * rng.random::<f64>()))
            .collect();
        let mu = CMatrix::from_fn(n, n, |i, j| m[(i, j)] * u[j]);
        let t = mu.schur().unpack().1;
        let lam = (0..n)
            .map(|i| t[(i, i)])
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))?;
        if lam.norm() >= 1.0 {
            return Some(u.into_iter().map(|x| x / lam).collect());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| {
            c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
        })
    }

    #[test]
    fn scalar_and_diagonal() {
        let m = CMatrix::from_element(1, 1, c(0.3, -0.4));
        assert_relative_eq!(mu_upper_bound(&m).value, 0.5, epsilon = 1e-15);
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(0.2, 0.0),
            c(0.0, -0.7),
        ]));
        assert_relative_eq!(mu_upper_bound(&d).value, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_sigma_agrees_with_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=3 {
            for _ in 0..200 {
                let m = random_matrix(&mut rng, n);
                let exact = max_singular_value(&m);
                assert_relative_eq!(small_sigma_max(&to_small(&m)), exact, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn nilpotent_has_zero_mu() {
        let m = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.1, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.4, 0.0),
                c(0.4, 0.0),
                c(0.0, 0.0),
            ],
        );
        assert!(mu_upper_bound(&m).value < 1e-6);
    }

    #[test]
    fn bound_below_sigma_and_det_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 3);
            let mu = mu_upper_bound(&m);
            assert!(mu.value <= max_singular_value(&m) + 1e-12);
            assert!(spectral_radius(&m) <= mu.value + 1e-9);
            let radius = (1.0 - 1e-3) / mu.value;
            for _ in 0..1000 {
                let delta = random_delta(3, radius, &mut rng);
                assert!(det_i_minus_m_delta(&m, &delta).norm() > 0.0);
            }
        }
    }

    #[test]
    fn destabilizing_search_certificate() {
        let m =
            CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.5, 0.0), c(0.1, 0.0)]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let delta = find_destabilizing(&m, 100, &mut rng).unwrap();
        assert!(delta.iter().all(|d| d.norm() <= 1.0 + 1e-12));
        assert!(det_i_minus_m_delta(&m, &delta).norm() < 1e-12);
        let small = CMatrix::from_element(1, 1, c(0.5, 0.0));
        assert!(find_destabilizing(&small, 100, &mut rng).is_none());
    }
}
