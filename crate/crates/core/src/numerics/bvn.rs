//! Bivariate and low-dimensional Gaussian (and Student) distribution
//! functions, built by conditioning on one coordinate and integrating
//! the remaining orthant probability with adaptive quadrature.

use crate::error::{Error, Result};
use crate::numerics::quad::adaptive_gk;
use crate::numerics::rng::SeededRng;
use crate::numerics::special::{norm_cdf, norm_ppf, student_cdf, student_ppf};
use nalgebra::DMatrix;

/// Bivariate standard normal CDF `P(X <= a, Y <= b)` with correlation
/// `rho`.
///
/// Uses the conditional decomposition
/// `Phi_2(a,b;rho) = int_0^{Phi(a)} Phi((b - rho Phi^{-1}(u)) / sqrt(1-rho^2)) du`,
/// which confines the integrand to [0, 1] and leaves it smooth.
pub fn phi2(a: f64, b: f64, rho: f64) -> f64 {
    assert!((-1.0..=1.0).contains(&rho), "phi2 requires |rho| <= 1");
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return 0.0;
    }
    if a == f64::INFINITY {
        return norm_cdf(b);
    }
    if b == f64::INFINITY {
        return norm_cdf(a);
    }
    if rho == 1.0 {
        return norm_cdf(a.min(b));
    }
    if rho == -1.0 {
        return (norm_cdf(a) + norm_cdf(b) - 1.0).max(0.0);
    }
    if rho == 0.0 {
        return norm_cdf(a) * norm_cdf(b);
    }
    // Exploit symmetry: condition on the variable with the smaller
    // marginal probability so the integration interval is shortest.
    let (a, b) = if norm_cdf(a) <= norm_cdf(b) {
        (a, b)
    } else {
        (b, a)
    };
    let ua = norm_cdf(a);
    if ua <= 0.0 {
        return 0.0;
    }
    let s = (1.0 - rho * rho).sqrt();
    adaptive_gk(
        |u| {
            let u = u.clamp(1e-300, 1.0 - 1e-16);
            norm_cdf((b - rho * norm_ppf(u)) / s)
        },
        0.0,
        ua,
        1e-13,
    )
}

/// Gaussian copula `C(u, v; rho)`.
pub fn gauss_copula(u: f64, v: f64, rho: f64) -> f64 {
    if u <= 0.0 || v <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return v.min(1.0);
    }
    if v >= 1.0 {
        return u;
    }
    phi2(norm_ppf(u), norm_ppf(v), rho)
}

/// Bivariate Student-t CDF `P(X <= x, Y <= y)` with correlation `rho`
/// and `nu` degrees of freedom, by conditioning on the first
/// coordinate:
/// the conditional law of `Y | X = s` is a scaled Student with
/// `nu + 1` degrees of freedom.
pub fn student2(x: f64, y: f64, rho: f64, nu: f64) -> f64 {
    assert!(nu > 0.0);
    assert!(rho.abs() < 1.0, "student2 requires |rho| < 1");
    let ux = student_cdf(x, nu);
    if ux <= 0.0 {
        return 0.0;
    }
    let s = (1.0 - rho * rho).sqrt();
    adaptive_gk(
        |w| {
            let w = w.clamp(1e-300, 1.0 - 1e-16);
            let sv = student_ppf(w, nu);
            let scale = ((nu + 1.0) / (nu + sv * sv)).sqrt();
            student_cdf(scale * (y - rho * sv) / s, nu + 1.0)
        },
        0.0,
        ux,
        1e-11,
    )
}

/// Student copula `C(u, v; rho, nu)`.
pub fn student_copula(u: f64, v: f64, rho: f64, nu: f64) -> f64 {
    if u <= 0.0 || v <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return v.min(1.0);
    }
    if v >= 1.0 {
        return u;
    }
    student2(student_ppf(u, nu), student_ppf(v, nu), rho, nu)
}

/// Trivariate standard normal CDF for a Toeplitz correlation
/// `[1, rho1, rho2; rho1, 1, rho1; rho2, rho1, 1]`, obtained by
/// conditioning on the middle coordinate.
pub fn phi3_toeplitz(a: [f64; 3], rho1: f64, rho2: f64) -> Result<f64> {
    let s1sq = 1.0 - rho1 * rho1;
    if s1sq <= 0.0 {
        return Err(Error::DegenerateCorrelation { rho: rho1 });
    }
    let rho_c = (rho2 - rho1 * rho1) / s1sq;
    if rho_c.abs() >= 1.0 {
        return Err(Error::NotPositiveDefinite {
            context: format!("Toeplitz (rho1, rho2) = ({rho1}, {rho2})"),
        });
    }
    let s1 = s1sq.sqrt();
    let ub = norm_cdf(a[1]);
    if ub <= 0.0 {
        return Ok(0.0);
    }
    Ok(adaptive_gk(
        |u| {
            let u = u.clamp(1e-300, 1.0 - 1e-16);
            let x = norm_ppf(u);
            phi2(
                (a[0] - rho1 * x) / s1,
                (a[2] - rho1 * x) / s1,
                rho_c,
            )
        },
        0.0,
        ub,
        1e-10,
    ))
}

/// Monte Carlo estimate of an n-variate normal orthant probability
/// `P(X_i <= a_i)` under correlation `sigma`, with antithetic pairs.
///
/// Returns the estimate and its standard error.
pub fn mvn_orthant_mc(
    a: &[f64],
    sigma: &DMatrix<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = a.len();
    assert_eq!(sigma.nrows(), n);
    assert_eq!(sigma.ncols(), n);
    let chol = sigma.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        context: format!("{n}x{n} correlation matrix for orthant probability"),
    })?;
    let l = chol.l();
    let mut rng = SeededRng::new(seed);
    let pairs = n_samples.div_ceil(2);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut z = vec![0.0_f64; n];
    for _ in 0..pairs {
        for zi in z.iter_mut() {
            *zi = rng.standard_normal();
        }
        let mut pair_mean = 0.0;
        for &sign in &[1.0_f64, -1.0] {
            let mut inside = true;
            for i in 0..n {
                let mut xi = 0.0;
                for j in 0..=i {
                    xi += l[(i, j)] * z[j];
                }
                if sign * xi > a[i] {
                    inside = false;
                    break;
                }
            }
            if inside {
                pair_mean += 0.5;
            }
        }
        sum += pair_mean;
        sum_sq += pair_mean * pair_mean;
    }
    let m = pairs as f64;
    let est = sum / m;
    let var = (sum_sq / m - est * est).max(0.0) / (m - 1.0).max(1.0);
    Ok((est, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn phi2_reference_values() {
        // Closed form at the median: 1/4 + asin(rho)/(2 pi).
        assert_relative_eq!(phi2(0.0, 0.0, 0.5), 1.0 / 3.0, epsilon = 1e-10);
        assert_relative_eq!(
            phi2(0.5, -0.3, 0.2),
            0.290764288137,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            phi2(1.2, -0.8, -0.4),
            0.160520160171,
            epsilon = 1e-9
        );
        assert_relative_eq!(phi2(0.0, 1.0, 0.7), 0.486822901118, epsilon = 1e-9);
    }

    #[test]
    fn phi2_degenerate_and_independent_limits() {
        assert_relative_eq!(
            phi2(0.3, 0.8, 0.0),
            norm_cdf(0.3) * norm_cdf(0.8),
            epsilon = 1e-12
        );
        assert_relative_eq!(phi2(0.3, 0.8, 1.0), norm_cdf(0.3), epsilon = 1e-14);
        assert_relative_eq!(
            phi2(0.3, -0.3, -1.0),
            norm_cdf(0.3) + norm_cdf(-0.3) - 1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn gauss_copula_reference_values() {
        assert_relative_eq!(
            gauss_copula(0.3, 0.3, 0.5),
            0.156767320682,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            gauss_copula(0.9, 0.9, 0.5),
            0.832401523218,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            gauss_copula(0.1, 0.1, 0.3),
            0.0216164803558,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            gauss_copula(0.1, 0.2, 0.3),
            0.0371429150255,
            epsilon = 1e-9
        );
    }

    #[test]
    fn student_copula_reference_values() {
        assert_relative_eq!(
            student_copula(0.3, 0.3, 0.5, 5.0),
            0.15892611091,
            epsilon = 2e-8
        );
        assert_relative_eq!(
            student_copula(0.9, 0.9, 0.5, 5.0),
            0.837279381237,
            epsilon = 2e-8
        );
    }

    #[test]
    fn copula_boundary_conditions() {
        for &rho in &[-0.6, 0.0, 0.45] {
            assert_relative_eq!(gauss_copula(1.0, 0.77, rho), 0.77, epsilon = 1e-12);
            assert_relative_eq!(gauss_copula(0.77, 1.0, rho), 0.77, epsilon = 1e-12);
            assert_eq!(gauss_copula(0.0, 0.5, rho), 0.0);
        }
    }

    #[test]
    fn trivariate_reference_values() {
        let z05 = 0.0;
        let z09 = norm_ppf(0.9);
        assert_relative_eq!(
            phi3_toeplitz([z05, z05, z05], 0.5, 0.25).unwrap(),
            0.228440989147,
            epsilon = 1e-8
        );
        assert_relative_eq!(
            phi3_toeplitz([z09, z09, z09], 0.3, 0.3).unwrap(),
            0.757906120624,
            epsilon = 1e-8
        );
        assert_relative_eq!(
            phi3_toeplitz([z09, z09, z09], 0.5, 0.25).unwrap(),
            0.772871149443,
            epsilon = 1e-8
        );
    }

    #[test]
    fn quadrivariate_mc_matches_reference() {
        // Toeplitz rho = (0.5, 0.25, 0.125) at the median.
        let sigma = DMatrix::from_fn(4, 4, |i, j| {
            let d = (i as i64 - j as i64).unsigned_abs() as usize;
            [1.0, 0.5, 0.25, 0.125][d]
        });
        let (est, se) = mvn_orthant_mc(&[0.0; 4], &sigma, 2_000_000, 99).unwrap();
        assert!(se < 3e-4);
        assert!(
            (est - 0.157662785).abs() < 4.0 * se,
            "est {est} differs from reference by more than 4 se ({se})"
        );
    }

    #[test]
    fn non_positive_definite_rejected() {
        let sigma = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.99 * [-1.0, 1.0][(i + j) % 2] });
        assert!(mvn_orthant_mc(&[0.0; 3], &sigma, 100, 1).is_err());
    }
}
