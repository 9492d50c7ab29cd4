//! Special functions: normal and Student-t distribution functions with
//! accurate inverses, the Riemann zeta function, trigamma, and Kummer's
//! confluent hypergeometric function.

use crate::error::{Error, Result};
use crate::numerics::kahan::KahanSum;

pub use statrs::function::beta::beta_reg;
pub use statrs::function::erf::{erf, erfc};
pub use statrs::function::gamma::{digamma, ln_gamma};

/// 1 / sqrt(2 pi).
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// sqrt(2 pi).
pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal quantile function.
///
/// Acklam's rational approximation refined by one Halley step; accurate
/// to full double precision over (0, 1).
pub fn norm_ppf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "norm_ppf requires p in (0,1), got {p}");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Two Halley refinements using the exact CDF bring the rational
    // approximation to full precision.
    let mut x = x;
    for _ in 0..2 {
        let e = norm_cdf(x) - p;
        let u = e * SQRT_2PI * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Student-t density with `nu` degrees of freedom (any real `nu > 0`).
pub fn student_pdf(x: f64, nu: f64) -> f64 {
    let ln_norm = ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * std::f64::consts::PI).ln();
    (ln_norm - 0.5 * (nu + 1.0) * (1.0 + x * x / nu).ln()).exp()
}

/// Student-t distribution function via the regularised incomplete beta
/// function; valid for any real `nu > 0`.
pub fn student_cdf(x: f64, nu: f64) -> f64 {
    assert!(nu > 0.0, "student_cdf requires nu > 0");
    if x == 0.0 {
        return 0.5;
    }
    let half_tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + x * x));
    if x < 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

/// Student-t quantile function, any real `nu > 0`.
///
/// Bracketing plus Newton polishing on the exact CDF.
pub fn student_ppf(p: f64, nu: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "student_ppf requires p in (0,1)");
    assert!(nu > 0.0, "student_ppf requires nu > 0");
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -student_ppf(1.0 - p, nu);
    }
    // Starting guess: scaled normal quantile for moderate nu, Cauchy
    // quantile for heavy tails.
    let mut x = if nu > 2.0 {
        norm_ppf(p) * (nu / (nu - 2.0)).sqrt()
    } else {
        (std::f64::consts::PI * (p - 0.5)).tan().max(0.1)
    };
    // Expand to a bracket [lo, hi] with cdf(lo) <= p <= cdf(hi).
    let (mut lo, mut hi) = (0.0_f64, x.max(1.0));
    let mut iter = 0;
    while student_cdf(hi, nu) < p {
        lo = hi;
        hi *= 2.0;
        iter += 1;
        assert!(iter < 200, "student_ppf bracket expansion failed");
    }
    x = x.clamp(lo, hi);
    for _ in 0..100 {
        let f = student_cdf(x, nu) - p;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = student_pdf(x, nu);
        let step = f / d;
        let mut next = x - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-14 * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

/// Riemann zeta function for real `s > 1` (Euler–Maclaurin).
pub fn zeta(s: f64) -> Result<f64> {
    if s <= 1.0 {
        return Err(Error::invalid("s", format!("zeta requires s > 1, got {s}")));
    }
    const N: usize = 24;
    let mut acc = KahanSum::new();
    for n in 1..N {
        acc.add((n as f64).powf(-s));
    }
    let nf = N as f64;
    acc.add(nf.powf(1.0 - s) / (s - 1.0));
    acc.add(0.5 * nf.powf(-s));
    // Euler–Maclaurin correction terms with Bernoulli numbers B2, B4, ...
    const BERNOULLI: [f64; 5] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
    ];
    let mut poch = s; // s (s+1) ... rising factorial
    let mut npow = nf.powf(-s - 1.0);
    let mut factorial = 2.0; // (2k)!
    for (k, &b) in BERNOULLI.iter().enumerate() {
        acc.add(b / factorial * poch * npow);
        // advance from (2k)! to (2k+2)!, pochhammer by two, power by two
        let two_k = 2.0 * (k as f64 + 1.0);
        factorial *= (two_k + 1.0) * (two_k + 2.0);
        poch *= (s + two_k - 1.0) * (s + two_k);
        npow /= nf * nf;
    }
    Ok(acc.total())
}

/// Trigamma function (second derivative of `ln Gamma`), `x > 0`.
pub fn trigamma(x: f64) -> f64 {
    assert!(x > 0.0, "trigamma requires x > 0");
    let mut x = x;
    let mut acc = 0.0;
    while x < 8.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    // Asymptotic series 1/x + 1/2x^2 + sum B_2k / x^{2k+1}.
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + 0.5 * inv2
        + inv * inv2
            * (1.0 / 6.0
                + inv2
                    * (-1.0 / 30.0
                        + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0)))))
}

/// Kummer confluent hypergeometric function 1F1(a; b; z) for real
/// arguments, `b` not a non-positive integer.
///
/// Power series with compensated summation for moderate `|z|`; for
/// large positive `z` the two-branch asymptotic expansion, truncated at
/// its smallest term.
pub fn hyp1f1(a: f64, b: f64, z: f64) -> f64 {
    assert!(
        !(b <= 0.0 && b.fract() == 0.0),
        "hyp1f1 pole: b must not be a non-positive integer"
    );
    // Polynomial case: a a non-positive integer terminates the series.
    let terminates = a <= 0.0 && a.fract() == 0.0;
    if terminates || z.abs() <= 30.0 {
        let mut acc = KahanSum::new();
        let mut term = 1.0;
        acc.add(term);
        let mut k = 0.0;
        loop {
            term *= (a + k) / (b + k) * z / (k + 1.0);
            if term == 0.0 {
                break;
            }
            acc.add(term);
            k += 1.0;
            if k > 500.0 {
                break;
            }
            if !terminates && term.abs() < 1e-17 * acc.total().abs().max(1e-300) {
                break;
            }
        }
        return acc.total();
    }
    assert!(z > 0.0, "hyp1f1 asymptotic branch implemented for z > 0 only");
    // 1F1(a;b;z) ~ G(b)/G(a) e^z z^{a-b} S1 + G(b)/G(b-a) z^{-a} S2.
    let series = |p: f64, q: f64, x: f64| -> f64 {
        // sum_k (p)_k (q)_k / (k! x^k), truncated at the smallest term
        let mut sum = 1.0;
        let mut term = 1.0;
        let mut best = f64::INFINITY;
        for k in 0..60 {
            let kf = k as f64;
            term *= (p + kf) * (q + kf) / ((kf + 1.0) * x);
            if term.abs() >= best {
                break;
            }
            best = term.abs();
            sum += term;
        }
        sum
    };
    let ln_gb = ln_gamma(b);
    // Branch 1: e^z z^{a-b}; Gamma(a) may be negative for negative a.
    let sign_ga = gamma_sign(a);
    let t1 = sign_ga
        * (ln_gb - ln_gamma_abs(a) + z + (a - b) * z.ln()).exp()
        * series(b - a, 1.0 - a, z);
    // Branch 2: z^{-a} with alternating series in -z.
    let sign_gba = gamma_sign(b - a);
    let t2 = sign_gba
        * (ln_gb - ln_gamma_abs(b - a) - a * z.ln()).exp()
        * series(a, a - b + 1.0, -z);
    t1 + t2
}

/// ln |Gamma(x)| for any real non-pole x.
fn ln_gamma_abs(x: f64) -> f64 {
    if x > 0.0 {
        ln_gamma(x)
    } else {
        // Reflection: |G(x)| = pi / (|sin(pi x)| |G(1-x)|).
        std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().abs().ln()
            - ln_gamma(1.0 - x)
    }
}

/// Sign of Gamma(x) for real x away from poles.
fn gamma_sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        // Gamma alternates sign between consecutive negative integers.
        if ((-x).floor() as i64) % 2 == 0 {
            -1.0
        } else {
            1.0
        }
    }
}
