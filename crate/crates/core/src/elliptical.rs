//! Closed-form dependence coefficients for (pseudo-)elliptical ensembles.
//!
//! The ensembles are products X = σ·ε of a positive volatility σ and a
//! correlated Gaussian residual ε.  Three volatility laws are covered:
//! degenerate (Gaussian ensemble), inverse-Gamma square root (Student
//! ensemble with tail index ν), and log-normal with vol-of-vol s.  The
//! module predicts every coefficient measured by [`crate::depmeasure`],
//! provides the exact and expanded Student tail-dependence coefficients,
//! and ships exact samplers for Monte Carlo validation.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numerics::quad::adaptive_gk_with_err;
use crate::numerics::rng::SeededRng;
use crate::numerics::special::{norm_cdf, student_cdf, student_ppf};

/// Volatility law of the ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// σ ≡ 1: the bivariate Gaussian.
    Gaussian,
    /// σ² inverse-Gamma with tail index ν (> 2 for finite variance).
    Student { nu: f64 },
    /// σ = exp(sω − s²) with ω standard normal.
    LogNormal { s: f64 },
}

/// Full specification of a bivariate (pseudo-)elliptical ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticalSpec {
    pub family: Family,
    /// Residual correlation of the Gaussian pair.
    pub r: f64,
    /// Optional log-volatility correlation (pseudo-elliptical log-normal);
    /// `None` means a volatility common to both components.
    pub c: Option<f64>,
}

/// Threshold above which Student formulas dispatch to their Gaussian limits,
/// avoiding catastrophic cancellation in the Γ ratios.
pub const GAUSSIAN_LIMIT_NU: f64 = 1e6;

impl EllipticalSpec {
    pub fn new(family: Family, r: f64, c: Option<f64>) -> Result<Self> {
        if !(r > -1.0 && r < 1.0) {
            return Err(Error::invalid("r", "residual correlation must lie in (−1, 1)"));
        }
        if let Some(c) = c {
            if !(-1.0..=1.0).contains(&c) {
                return Err(Error::invalid("c", "log-vol correlation must lie in [−1, 1]"));
            }
        }
        match family {
            Family::Student { nu } if !(nu > 0.0) => {
                return Err(Error::invalid("nu", "tail index must be positive"))
            }
            Family::LogNormal { s } if !(s >= 0.0) => {
                return Err(Error::invalid("s", "vol-of-vol must be non-negative"))
            }
            _ => {}
        }
        Ok(Self { family, r, c })
    }

    fn c_or_common(&self) -> f64 {
        self.c.unwrap_or(1.0)
    }
}

/// Model-predicted subset of the dependence profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticalPredictions {
    /// Linear correlation ρ.
    pub pearson: f64,
    /// Quadratic signed-power correlation ρ^(2).
    pub signed_power_2: f64,
    /// Absolute-value correlation ρ^(a,1).
    pub absolute_power_1: f64,
    /// Kendall's τ — equals Blomqvist's β throughout the class.
    pub kendall: f64,
    pub blomqvist: f64,
    /// Effective (copula-medial) correlation.
    pub effective: f64,
    /// Excess kurtosis of one margin, 3(f⁽²⁾ − 1).
    pub kurtosis_excess: f64,
}

/// Pre-asymptotic expansion of the Student upper-upper tail dependence:
/// τ(p) ≈ τ* + β·(1−p)^{2/ν}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentTailExpansion {
    pub tau_star: f64,
    pub beta: f64,
    /// Exponent 2/ν of the sub-leading term.
    pub exponent: f64,
    /// k(1) = √((ν+1)(1−ρ)/(1+ρ)).
    pub k1: f64,
    /// Tail constant L_ν = π^{−1/2} ν^{ν/2} Γ((ν+1)/2)/Γ(ν/2).
    pub l_nu: f64,
    /// Set for ρ = −1, where the coefficient degenerates to zero.
    pub degenerate: bool,
}

/// Normalized volatility moment factor f⁽ᵈ⁾ = ⟨σ^{2d}⟩/⟨σ²⟩^d of the spec,
/// evaluated at the spec's own log-vol correlation (common volatility when
/// none is set).
///
/// Gaussian → 1; Student → f⁽¹⁾ = 2/(ν−2)·(Γ(ν/2)/Γ((ν−1)/2))²,
/// f⁽²⁾ = (ν−2)/(ν−4); log-normal → e^{d²s²} (e^{d²s²c} with a log-vol
/// correlation c).
pub fn fd_moment(spec: &EllipticalSpec, d: u32) -> Result<f64> {
    fd_at(spec, d, spec.c_or_common())
}

/// f⁽ᵈ⁾ evaluated at log-vol correlation z (pseudo-elliptical log-normal
/// family; the Gaussian and Student factors do not depend on z).
fn fd_at(spec: &EllipticalSpec, d: u32, z: f64) -> Result<f64> {
    if d == 0 {
        return Ok(1.0);
    }
    match spec.family {
        Family::Gaussian => Ok(1.0),
        Family::Student { nu } if nu >= GAUSSIAN_LIMIT_NU => Ok(1.0),
        Family::Student { nu } => {
            if nu <= 2.0 * f64::from(d) {
                return Err(Error::MomentDivergence { order: 2 * d, nu });
            }
            match d {
                1 => {
                    let lg = ln_gamma(nu / 2.0) - ln_gamma((nu - 1.0) / 2.0);
                    Ok(2.0 / (nu - 2.0) * (2.0 * lg).exp())
                }
                2 => Ok((nu - 2.0) / (nu - 4.0)),
                _ => Err(Error::invalid("d", "Student moment factors are implemented for d ∈ {1, 2}")),
            }
        }
        Family::LogNormal { s } => Ok((f64::from(d * d) * s * s * z).exp()),
    }
}

/// D(r) = √(1−r²) + r·arcsin r, the Gaussian absolute-moment kernel.
pub fn absolute_moment_kernel(r: f64) -> f64 {
    (1.0 - r * r).sqrt() + r * r.asin()
}

/// Closed-form predictions of the dependence coefficients for an ensemble.
pub fn predicted_coefficients(spec: &EllipticalSpec) -> Result<EllipticalPredictions> {
    let c = spec.c_or_common();
    let r = spec.r;
    let f1c = fd_at(spec, 1, c)?;
    let f11 = fd_at(spec, 1, 1.0)?;
    let f2c = fd_at(spec, 2, c)?;
    let f21 = fd_at(spec, 2, 1.0)?;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let rank = 2.0 / std::f64::consts::PI * r.asin();
    Ok(EllipticalPredictions {
        pearson: r * f1c / f11,
        signed_power_2: (f2c * (1.0 + 2.0 * r * r) - 1.0) / (3.0 * f21 - 1.0),
        absolute_power_1: (f1c * absolute_moment_kernel(r) - 1.0) / (half_pi * f11 - 1.0),
        kendall: rank,
        blomqvist: rank,
        effective: r,
        kurtosis_excess: 3.0 * (f21 - 1.0),
    })
}

/// Copula value at the medial point for any elliptical correlation r:
/// C(½,½) = ¼ + arcsin(r)/(2π).
pub fn medial_copula_value(r: f64) -> f64 {
    0.25 + r.asin() / (2.0 * std::f64::consts::PI)
}

/// Asymptotic and sub-leading coefficients of the Student upper tail
/// dependence: τ(p) = τ* + β·(1−p)^{2/ν} + O((1−p)^{4/ν}).
pub fn student_tail_dependence(nu: f64, rho: f64) -> Result<StudentTailExpansion> {
    if !(nu > 0.0) {
        return Err(Error::invalid("nu", "tail index must be positive"));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::invalid("rho", "correlation must lie in [−1, 1]"));
    }
    let exponent = 2.0 / nu;
    if rho == -1.0 {
        return Ok(StudentTailExpansion {
            tau_star: 0.0,
            beta: 0.0,
            exponent,
            k1: f64::INFINITY,
            l_nu: l_constant(nu),
            degenerate: true,
        });
    }
    let k1 = ((nu + 1.0) * (1.0 - rho) / (1.0 + rho)).sqrt();
    let tau_star = if nu >= GAUSSIAN_LIMIT_NU {
        2.0 - 2.0 * norm_cdf(k1)
    } else {
        2.0 - 2.0 * student_cdf(k1, nu + 1.0)
    };
    let l_nu = l_constant(nu);
    // β assembled in logs: the pieces span hundreds of orders of magnitude
    // for large ν even though β itself is O(1).
    let ln_pdf = if nu >= GAUSSIAN_LIMIT_NU {
        -0.5 * k1 * k1 - 0.5 * (2.0 * std::f64::consts::PI).ln()
    } else {
        student_ln_pdf(k1, nu + 1.0)
    };
    let ln_l = ln_l_constant(nu);
    let beta = if k1 == 0.0 {
        0.0
    } else {
        ((1.0 + exponent) * nu.ln() - (1.0 + exponent).ln() + k1.ln() + ln_pdf - exponent * ln_l).exp()
    };
    Ok(StudentTailExpansion { tau_star, beta, exponent, k1, l_nu, degenerate: false })
}

fn ln_l_constant(nu: f64) -> f64 {
    -0.5 * std::f64::consts::PI.ln() + 0.5 * nu * nu.ln() + ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0)
}

fn l_constant(nu: f64) -> f64 {
    ln_l_constant(nu).exp()
}

fn student_ln_pdf(x: f64, nu: f64) -> f64 {
    ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()
}

/// Exact finite-level Student upper-upper tail dependence
/// τ(p) = 2 − (2/(1−p)) ∫_p^1 T_{ν+1}(k(p′)) dp′ with
/// k(p′) = k(1)/√(1 + ν/x_{p′}²), x_{p′} = T_ν⁻¹(p′).
pub fn student_tail_exact(p: f64, nu: f64, rho: f64) -> Result<f64> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::invalid("p", "level must lie in (0, 1)"));
    }
    if !(nu > 0.0) {
        return Err(Error::invalid("nu", "tail index must be positive"));
    }
    if !(rho > -1.0 && rho <= 1.0) {
        return Err(Error::DegenerateCorrelation { rho });
    }
    let k1 = ((nu + 1.0) * (1.0 - rho) / (1.0 + rho)).sqrt();
    let integrand = |pp: f64| {
        if pp >= 1.0 {
            return student_cdf(k1, nu + 1.0);
        }
        let x = student_ppf(pp.max(0.5), nu);
        let k = if x <= 0.0 { 0.0 } else { k1 / (1.0 + nu / (x * x)).sqrt() };
        student_cdf(k, nu + 1.0)
    };
    let tol = 1e-10;
    let (integral, err) = adaptive_gk_with_err(integrand, p, 1.0, tol);
    if err > 1e-8 {
        return Err(Error::NoConvergence {
            what: format!("tail-dependence quadrature (error estimate {err:.3e})"),
            iterations: 2000,
        });
    }
    Ok(2.0 - 2.0 * integral / (1.0 - p))
}

/// Effective Student tail index of the log-normal ensemble:
/// ν_eff = 2 + 0.5/s².
pub fn lognormal_student_dictionary(s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::invalid("s", "vol-of-vol must be positive"));
    }
    Ok(2.0 + 0.5 / (s * s))
}

/// Draw a correlated pair series from the ensemble.
///
/// The residual pair is Gaussian with correlation r.  The volatility is
/// common to both components for the Gaussian and Student families; the
/// log-normal family honours the log-vol correlation c (default 1, i.e.
/// common volatility).
pub fn sample_elliptical(spec: &EllipticalSpec, t: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if t == 0 {
        return Err(Error::InsufficientData { what: "sample length".into(), need: 1, got: 0 });
    }
    let mut rng = SeededRng::new(seed);
    let r = spec.r;
    let ortho = (1.0 - r * r).sqrt();
    let mut x = Vec::with_capacity(t);
    let mut y = Vec::with_capacity(t);
    for _ in 0..t {
        let z1 = rng.standard_normal();
        let z2 = r * z1 + ortho * rng.standard_normal();
        let (s1, s2) = draw_sigmas(spec, &mut rng);
        x.push(s1 * z1);
        y.push(s2 * z2);
    }
    Ok((x, y))
}

fn draw_sigmas(spec: &EllipticalSpec, rng: &mut SeededRng) -> (f64, f64) {
    match spec.family {
        Family::Gaussian => (1.0, 1.0),
        Family::Student { nu } if nu >= GAUSSIAN_LIMIT_NU => (1.0, 1.0),
        Family::Student { nu } => {
            let w = rng.gamma(nu / 2.0, 2.0);
            let sigma = (nu / w).sqrt();
            (sigma, sigma)
        }
        Family::LogNormal { s } => {
            let c = spec.c_or_common();
            let w1 = rng.standard_normal();
            let w2 = c * w1 + (1.0 - c * c).sqrt() * rng.standard_normal();
            ((s * w1 - s * s).exp(), (s * w2 - s * s).exp())
        }
    }
}
