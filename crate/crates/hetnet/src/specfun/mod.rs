//! Special functions and the characteristic-function inversion engine that
//! every closed-form expression is built on: double factorials, generalized
//! binomials, a Gauss hypergeometric routine for the one parameter family the
//! analysis needs, Gauss–Legendre rules, the Irwin–Hall density and the
//! Gil-Pelaez CDF inversion.

mod gil_pelaez;
mod quad;

pub use gil_pelaez::{gil_pelaez_cdf, GilPelaezCdf};
pub use quad::{integrate, QuadError, QuadResult, QuadValue, QuadratureSpec};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecfunError {
    #[error("double factorial requires an odd n >= -1, got {0}")]
    BadDoubleFactorial(i64),
    #[error("double factorial overflows u128 for n = {0}")]
    DoubleFactorialOverflow(i64),
    #[error("complex power requires a positive real base, got {0}")]
    NonPositiveBase(f64),
    #[error("hyp2f1 is only implemented for c = b + 1, got b = {b}, c = {c}")]
    UnsupportedHypParams { b: f64, c: f64 },
    #[error("hyp2f1 requires x <= 0, got {0}")]
    HypArgumentOutOfDomain(f64),
    #[error(
        "series did not converge within n_max = {n_max} terms (last relative term {last_rel:.3e})"
    )]
    SeriesNonConvergence { n_max: u32, last_rel: f64 },
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// Truncation control for the hypergeometric and kappa series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    /// Hard cap on the series index.
    pub n_max: u32,
    /// Terminate once the tail bound drops below `tail_tol` times the
    /// partial-sum magnitude.
    pub tail_tol: f64,
}

impl Default for SeriesSpec {
    fn default() -> Self {
        SeriesSpec {
            n_max: 400,
            tail_tol: 1e-14,
        }
    }
}

/// Double factorial n!! = n (n-2) (n-4) ... 1 for odd n, with (-1)!! = 1 by
/// the empty-product convention.
pub fn double_factorial(n: i64) -> Result<u128, SpecfunError> {
    if n == -1 {
        return Ok(1);
    }
    if n < 0 || n % 2 == 0 {
        return Err(SpecfunError::BadDoubleFactorial(n));
    }
    let mut acc: u128 = 1;
    let mut m = n as u128;
    while m > 1 {
        acc = acc
            .checked_mul(m)
            .ok_or(SpecfunError::DoubleFactorialOverflow(n))?;
        m -= 2;
    }
    Ok(acc)
}

/// Generalized binomial coefficient binom(s, n) for complex s:
/// the product of (s - m)/(m + 1) over m = 0..n. Exact for integer s.
pub fn complex_binomial(s: Complex64, n: u32) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for m in 0..n {
        acc *= (s - m as f64) / (m as f64 + 1.0);
    }
    acc
}

/// e^{ix} as a complex number.
#[inline]
pub(crate) fn cis(x: f64) -> Complex64 {
    let (s, c) = x.sin_cos();
    Complex64::new(c, s)
}

/// 1 - e^{ix}, computed without cancellation for small x.
#[inline]
pub(crate) fn one_minus_cis(x: f64) -> Complex64 {
    let half_sin = (0.5 * x).sin();
    Complex64::new(2.0 * half_sin * half_sin, -x.sin())
}

/// A positive real base raised to a complex exponent: exp(exponent * ln base).
pub fn complex_pow(base: f64, exponent: Complex64) -> Result<Complex64, SpecfunError> {
    // NaN bases must fail this test too, hence the negated comparison.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(base > 0.0) {
        return Err(SpecfunError::NonPositiveBase(base));
    }
    let ln_base = base.ln();
    Ok((exponent * ln_base).exp())
}

/// Gauss hypergeometric 2F1(n, b; c; x) for the single family the analysis
/// uses: positive integer first parameter, c = b + 1, and x <= 0.
///
/// The Pfaff transformation
/// 2F1(a, b; c; x) = (1 - x)^{-a} 2F1(a, c - b; c; x/(x - 1))
/// maps x in (-inf, 0] to y = x/(x-1) in [0, 1), where the series
/// sum_m (n)_m (1)_m / (c)_m y^m / m! converges geometrically.
pub fn hyp2f1(n: u32, b: f64, c: f64, x: f64, spec: &SeriesSpec) -> Result<f64, SpecfunError> {
    if (c - b - 1.0).abs() > 1e-12 * c.abs().max(1.0) {
        return Err(SpecfunError::UnsupportedHypParams { b, c });
    }
    if x > 0.0 {
        return Err(SpecfunError::HypArgumentOutOfDomain(x));
    }
    if n == 0 || x == 0.0 {
        return Ok(1.0);
    }
    let y = x / (x - 1.0); // in [0, 1)
    let prefactor = (1.0 - x).powi(-(n as i32));

    // 2F1(n, 1; c; y) = sum_m (n)_m / (c)_m y^m, with term ratio
    // y (n + m)/(c + m). Since c > n for this family, every ratio stays
    // below y, so the remaining tail is bounded by |term| y/(1 - y).
    let tail_factor = y / (1.0 - y);
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for m in 0..spec.n_max {
        term *= y * (n as f64 + m as f64) / (c + m as f64);
        sum += term;
        if term.abs() * tail_factor < spec.tail_tol * sum.abs() {
            return Ok(prefactor * sum);
        }
    }
    Err(SpecfunError::SeriesNonConvergence {
        n_max: spec.n_max,
        last_rel: (term / sum).abs(),
    })
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1], computed
/// by Newton iteration on the Legendre recurrence.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and derivative via the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Density of the sum of `n` independent standard uniforms at `x`, supported
/// on [0, n]:
/// f_n(x) = 1/(n-1)! sum_{j<=x} (-1)^j C(n, j) (x - j)^{n-1}.
///
/// The alternating sum loses roughly n digits of precision; callers keep
/// n <= 12 where the result is still accurate to ~1e-7 relative.
pub fn irwin_hall_pdf(n: u32, x: f64) -> f64 {
    if n == 0 || x <= 0.0 || x >= n as f64 {
        return 0.0;
    }
    let nf = n as f64;
    let mut fact = 1.0f64; // (n-1)!
    for k in 2..n {
        fact *= k as f64;
    }
    let mut binom = 1.0f64; // C(n, j)
    let mut sum = 0.0f64;
    let mut sign = 1.0f64;
    let jmax = x.floor() as u32;
    for j in 0..=jmax.min(n) {
        if j > 0 {
            binom *= (nf - j as f64 + 1.0) / j as f64;
            sign = -sign;
        }
        sum += sign * binom * (x - j as f64).powi(n as i32 - 1);
    }
    sum / fact
}
