//! Goodness-of-fit laws for identically distributed but serially
//! dependent samples.
//!
//! Serial dependence deforms the covariance of the empirical bridge from
//! the Brownian-bridge kernel `I(u,v) = min(u,v) - uv` to
//! `H(u,v) = I(u,v) [1 + Psi(u,v)]`, where `Psi` accumulates the
//! lag-copula departures from independence.  The limit laws of the
//! Cramér–von Mises and Kolmogorov–Smirnov statistics follow from the
//! spectrum of `H`: the CM statistic is the quadratic form
//! `sum_j lambda_j z_j^2` (law obtained by characteristic-function
//! inversion or Monte Carlo), and the KS law is dominated by the top
//! mode, `P(KS <= k) = erf(k / (sqrt(2) kappa))` with
//! `kappa(u) = sqrt(lambda_0) |U_0(u)|` at its maximiser.

use crate::depmeasure::EmpiricalCopula;
use crate::error::{Error, Result};
use crate::numerics::rng::SeededRng;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default lag cutoff when accumulating lag copulas into `Psi`.
pub const DEFAULT_LAG_CUTOFF: usize = 512;
/// Eigenvalues below this are treated as noise-induced negativity.
const NEG_EIG_TOL: f64 = -1e-10;

/// Spectral representation of the dependence-deformed bridge kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependenceKernel {
    /// Interior grid size `M`; nodes are `u_i = i/(M+1)`.
    pub grid_size: usize,
    /// Accumulated relative departure `Psi(u,v)` on the grid.
    pub psi: DMatrix<f64>,
    /// Kernel `H = I (1 + Psi)` on the grid.
    pub h: DMatrix<f64>,
    /// Eigenvalues of the weighted kernel `h H`, descending, clipped to `>= 0`.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors `U_j(u_i)` (columns), orthonormal under the quadrature
    /// weight `h = 1/(M+1)`.
    pub eigenvectors: DMatrix<f64>,
    /// Lag cutoff used when the kernel was accumulated.
    pub lag_cutoff: usize,
    /// Number of (noise-induced) negative eigenvalues clipped to zero.
    pub clipped: usize,
}

/// How the Cramér–von Mises law is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CmMethod {
    /// Numerical inversion of the characteristic function
    /// `phi(t) = prod_j (1 - 2 i t lambda_j)^{-1/2}`.
    CharacteristicFunction,
    /// Direct sampling of `sum_j lambda_j z_j^2` (at least 1e6 draws).
    MonteCarlo { trials: usize, seed: u64 },
}

/// Which route produced a law table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LawMethod {
    CharacteristicFunction,
    MonteCarlo,
    DominantMode,
}

/// Limit laws of the dependent GoF statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GofDepLaw {
    /// Tabulated CDF of the CM statistic: `(x, P(CM <= x))`, increasing in x.
    pub cm_cdf: Vec<(f64, f64)>,
    /// Tabulated CDF of the KS statistic: `(k, P(KS <= k))`.
    pub ks_cdf: Vec<(f64, f64)>,
    /// Mean of CM: quadrature trace of `H`.
    pub mean_cm: f64,
    /// Variance of CM: `2 Tr H^2`.
    pub var_cm: f64,
    /// Multi-mode KS width `kappa* = sqrt(sum_j lambda_j U_j(u0*)^2)`.
    pub kappa_star: f64,
    /// Location of the maximum of `kappa_0(u) = sqrt(lambda_0) |U_0(u)|`.
    pub u0_star: f64,
    pub method: LawMethod,
}

/// Empirical limit-process samples (sorted) from the spectral Monte Carlo.
#[derive(Debug, Clone)]
pub struct LimitProcess {
    /// Sorted samples of `sup_u |y(u)|`.
    pub ks_sorted: Vec<f64>,
    /// Sorted samples of `integral y^2 du = sum_j lambda_j z_j^2`.
    pub cm_sorted: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Psi construction
// ---------------------------------------------------------------------------

/// Interior evaluation grid `u_i = i/(M+1), i = 1..M` (the bridge kernel
/// vanishes at the pinned endpoints 0 and 1).
pub fn interior_grid(m: usize) -> Vec<f64> {
    (1..=m).map(|i| i as f64 / (m + 1) as f64).collect()
}

/// Brownian-bridge kernel `I(u,v) = min(u,v) - uv` on the interior grid.
fn bridge_kernel(m: usize) -> DMatrix<f64> {
    let u = interior_grid(m);
    DMatrix::from_fn(m, m, |i, j| u[i].min(u[j]) - u[i] * u[j])
}

/// Accumulate `Psi(u,v) = sum_t (1 - t/N)(Delta_t + Delta_{-t})` from
/// empirical lag copulas (entry `t-1` of the slice holds lag `t`), where
/// `Delta_t(u,v) = (C_t(u,v) - uv) / I(u,v)` and the negative lag is the
/// transpose.
pub fn psi_from_copulas(
    copulas: &[EmpiricalCopula],
    n: usize,
    t_max: usize,
) -> Result<DMatrix<f64>> {
    if copulas.is_empty() {
        return Err(Error::invalid("copulas", "no lag copulas supplied"));
    }
    let m = copulas[0].grid_size();
    for (t, c) in copulas.iter().enumerate() {
        if c.grid_size() != m {
            return Err(Error::invalid(
                "copulas",
                format!("grid mismatch: lag {} has M = {}, expected {}", t + 1, c.grid_size(), m),
            ));
        }
    }
    if t_max >= n {
        return Err(Error::invalid(
            "t_max",
            format!("lag cutoff {t_max} must be below the sample length {n}"),
        ));
    }
    let u = interior_grid(m);
    let lags: Vec<DMatrix<f64>> = copulas
        .iter()
        .take(t_max)
        .map(|c| DMatrix::from_fn(m, m, |i, j| c.eval(u[i], u[j])))
        .collect::<Vec<_>>();
    psi_from_lag_grids(&lags, n)
}

/// As [`psi_from_copulas`], but from lag-copula values already evaluated
/// on the interior grid (`lag_grids[t-1][(i, j)] = C_t(u_i, u_j)`); used
/// by model kernels that can evaluate their copulas exactly.
pub fn psi_from_lag_grids(lag_grids: &[DMatrix<f64>], n: usize) -> Result<DMatrix<f64>> {
    if lag_grids.is_empty() {
        return Err(Error::invalid("lag_grids", "no lag copulas supplied"));
    }
    let m = lag_grids[0].nrows();
    if lag_grids.len() >= n {
        return Err(Error::invalid(
            "lag_grids",
            format!("{} lags for a sample of length {n}", lag_grids.len()),
        ));
    }
    let u = interior_grid(m);
    let eye = bridge_kernel(m);
    let mut psi = DMatrix::zeros(m, m);
    for (t0, c_t) in lag_grids.iter().enumerate() {
        if c_t.nrows() != m || c_t.ncols() != m {
            return Err(Error::invalid(
                "lag_grids",
                format!("lag {} grid is {}x{}, expected {m}x{m}", t0 + 1, c_t.nrows(), c_t.ncols()),
            ));
        }
        let w = 1.0 - (t0 + 1) as f64 / n as f64;
        for i in 0..m {
            for j in 0..m {
                let delta = (c_t[(i, j)] - u[i] * u[j]) / eye[(i, j)];
                let delta_rev = (c_t[(j, i)] - u[i] * u[j]) / eye[(i, j)];
                psi[(i, j)] += w * (delta + delta_rev);
            }
        }
    }
    // Enforce exact symmetry against rounding.
    for i in 0..m {
        for j in (i + 1)..m {
            let s = 0.5 * (psi[(i, j)] + psi[(j, i)]);
            psi[(i, j)] = s;
            psi[(j, i)] = s;
        }
    }
    Ok(psi)
}

// ---------------------------------------------------------------------------
// Kernel build and spectral decomposition
// ---------------------------------------------------------------------------

/// Build `H = I (1 + Psi)` on the interior grid and diagonalise the
/// quadrature-weighted kernel `h H`.  Noise-induced negative eigenvalues
/// (below `-1e-10`) are reported on stderr and clipped to zero.
pub fn build_kernel(psi: &DMatrix<f64>, lag_cutoff: usize) -> Result<DependenceKernel> {
    let m = psi.nrows();
    if psi.ncols() != m || m == 0 {
        return Err(Error::invalid(
            "psi",
            format!("expected square non-empty grid, got {}x{}", psi.nrows(), psi.ncols()),
        ));
    }
    let mut max_asym: f64 = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            max_asym = max_asym.max((psi[(i, j)] - psi[(j, i)]).abs());
        }
        for j in 0..m {
            if !psi[(i, j)].is_finite() {
                return Err(Error::invalid("psi", format!("non-finite entry at ({i}, {j})")));
            }
        }
    }
    if max_asym > 1e-10 {
        return Err(Error::invalid(
            "psi",
            format!("not symmetric: max |Psi(u,v) - Psi(v,u)| = {max_asym:.3e}"),
        ));
    }
    let eye = bridge_kernel(m);
    let h_mat = DMatrix::from_fn(m, m, |i, j| eye[(i, j)] * (1.0 + psi[(i, j)]));
    let h = 1.0 / (m + 1) as f64;
    let eig = nalgebra::linalg::SymmetricEigen::new(&h_mat * h);
    // Sort descending and re-order the eigenvector columns to match.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenvectors = DMatrix::zeros(m, m);
    let mut clipped = 0usize;
    for (col, &idx) in order.iter().enumerate() {
        let lam = eig.eigenvalues[idx];
        if lam < NEG_EIG_TOL {
            clipped += 1;
        }
        eigenvalues.push(lam.max(0.0));
        // Rescale from unit Euclidean norm to h-orthonormality.
        let scale = 1.0 / h.sqrt();
        for row in 0..m {
            eigenvectors[(row, col)] = eig.eigenvectors[(row, idx)] * scale;
        }
    }
    if clipped > 0 {
        eprintln!(
            "warning: clipped {clipped} negative eigenvalue(s) of the dependence kernel to zero \
             (most negative {:.3e}); long-lag noise can make the empirical kernel indefinite",
            order.iter().map(|&i| eig.eigenvalues[i]).fold(f64::INFINITY, f64::min)
        );
    }
    Ok(DependenceKernel {
        grid_size: m,
        psi: psi.clone(),
        h: h_mat,
        eigenvalues,
        eigenvectors,
        lag_cutoff,
        clipped,
    })
}

/// The independence kernel (`Psi = 0`) on an `M`-point interior grid.
pub fn independence_kernel(m: usize) -> Result<DependenceKernel> {
    build_kernel(&DMatrix::zeros(m, m), 0)
}

impl DependenceKernel {
    /// Quadrature weight of the grid.
    pub fn weight(&self) -> f64 {
        1.0 / (self.grid_size + 1) as f64
    }

    /// Quadrature trace `h sum_i H(u_i, u_i)` (the CM mean).
    pub fn trace(&self) -> f64 {
        self.weight() * (0..self.grid_size).map(|i| self.h[(i, i)]).sum::<f64>()
    }

    /// `2 h^2 sum_ij H(u_i,u_j)^2` (the CM variance).
    pub fn cm_variance(&self) -> f64 {
        let h = self.weight();
        2.0 * h * h * self.h.iter().map(|x| x * x).sum::<f64>()
    }

    /// Dominant-mode width profile `kappa_0(u_i) = sqrt(lambda_0) |U_0(u_i)|`.
    pub fn kappa0_profile(&self) -> Vec<f64> {
        let l0 = self.eigenvalues[0].sqrt();
        (0..self.grid_size).map(|i| l0 * self.eigenvectors[(i, 0)].abs()).collect()
    }
}

// ---------------------------------------------------------------------------
// Characteristic-function inversion for quadratic forms
// ---------------------------------------------------------------------------

/// Tabulated phase/log-modulus of `phi(t) = prod (1 - 2 i lambda_j t)^{-1/2}`,
/// shared across CDF evaluations: the CDF at `x` is
/// `F(x) = 1/2 - (1/pi) int_0^inf e^{L(t)} sin(A(t) - t x) / t dt` with
/// `A(t) = (1/2) sum atan(2 lambda_j t)` and
/// `L(t) = -(1/4) sum ln(1 + 4 lambda_j^2 t^2)`.
struct QuadFormTables {
    dt: f64,
    phase: Vec<f64>,
    modulus: Vec<f64>,
    sum_lam: f64,
    shift: f64,
}

impl QuadFormTables {
    fn build(lam: &[f64], shift: f64, t_max: f64, n: usize) -> Self {
        let dt = t_max / n as f64;
        let mut phase = vec![0.0; n];
        let mut modulus = vec![0.0; n];
        phase
            .par_iter_mut()
            .zip(modulus.par_iter_mut())
            .enumerate()
            .for_each(|(i, (a, m))| {
                let t = (i + 1) as f64 * dt;
                let mut ph = 0.0;
                let mut lm = 0.0;
                for &l in lam {
                    let x = l * t;
                    ph += (2.0 * x).atan();
                    lm += (4.0 * x * x).ln_1p();
                }
                *a = 0.5 * ph;
                *m = (-0.25 * lm).exp();
            });
        Self { dt, phase, modulus, sum_lam: lam.iter().sum(), shift }
    }

    /// Trapezoidal Gil-Pelaez integral with the analytic `t -> 0` limit.
    fn integral(&self, x: f64, stride: usize, cap: Option<usize>) -> f64 {
        let n = cap.unwrap_or(self.phase.len());
        let dt = self.dt * stride as f64;
        let mut sum = 0.5 * (self.sum_lam - x); // limit of the integrand at t = 0
        let mut last = 0.0;
        let mut idx = stride - 1;
        while idx < n {
            let t = (idx + 1) as f64 * self.dt;
            last = self.modulus[idx] * (self.phase[idx] - t * x).sin() / t;
            sum += last;
            idx += stride;
        }
        dt * (sum - 0.5 * last)
    }

    /// CDF value plus a two-sided discretisation/truncation error estimate.
    fn cdf(&self, x: f64) -> (f64, f64) {
        let xx = x - self.shift;
        let full = self.integral(xx, 1, None);
        let half_res = self.integral(xx, 2, None);
        let half_range = self.integral(xx, 1, Some(self.phase.len() / 2));
        let err = (full - half_res).abs().max((full - half_range).abs()) / std::f64::consts::PI;
        (0.5 - full / std::f64::consts::PI, err)
    }
}

/// CDF table of `Q = shift + sum_j lambda_j z_j^2` by Gil-Pelaez inversion
/// with dyadic refinement of the frequency grid; errors out (for the MC
/// fallback) if the error estimate does not reach `tol`.
fn quad_form_cdf_table(
    lam: &[f64],
    shift: f64,
    xs: &[f64],
    tol: f64,
) -> std::result::Result<Vec<f64>, String> {
    let mut t_max = 512.0;
    let mut n = 1 << 17;
    for _ in 0..5 {
        let tables = QuadFormTables::build(lam, shift, t_max, n);
        let evals: Vec<(f64, f64)> = xs.par_iter().map(|&x| tables.cdf(x)).collect();
        let max_err = evals.iter().fold(0.0f64, |acc, &(_, e)| acc.max(e));
        if max_err < tol {
            let mut cdf: Vec<f64> = evals.iter().map(|&(v, _)| v.clamp(0.0, 1.0)).collect();
            // Enforce monotonicity against residual quadrature wiggle.
            for i in 1..cdf.len() {
                cdf[i] = cdf[i].max(cdf[i - 1]);
            }
            return Ok(cdf);
        }
        // Resolution errors double the node count; truncation errors double
        // the range (keeping dt), which also doubles the node count.
        t_max *= 2.0;
        n *= 2;
        if n > (1 << 22) {
            break;
        }
    }
    Err(format!(
        "characteristic-function inversion did not converge below {tol} (range {t_max}, {n} nodes)"
    ))
}

// ---------------------------------------------------------------------------
// Laws
// ---------------------------------------------------------------------------

/// Cramér–von Mises limit law of the kernel's quadratic form.
pub fn cm_law(kernel: &DependenceKernel, method: CmMethod) -> Result<GofDepLaw> {
    let mean = kernel.trace();
    let var = kernel.cm_variance();
    let x_max = mean + 12.0 * var.sqrt();
    let xs: Vec<f64> = (0..=600).map(|i| x_max * i as f64 / 600.0).collect();
    let (cdf, used): (Vec<f64>, LawMethod) = match method {
        CmMethod::CharacteristicFunction => {
            match quad_form_cdf_table(&kernel.eigenvalues, 0.0, &xs, 1e-6) {
                Ok(c) => (c, LawMethod::CharacteristicFunction),
                Err(why) => {
                    eprintln!(
                        "warning: {why}; falling back to Monte Carlo over 1e6 draws"
                    );
                    (
                        mc_quad_form_cdf(&kernel.eigenvalues, &xs, 1_000_000, 71),
                        LawMethod::MonteCarlo,
                    )
                }
            }
        }
        CmMethod::MonteCarlo { trials, seed } => {
            if trials < 1_000_000 {
                return Err(Error::invalid(
                    "trials",
                    format!("Monte Carlo CM law needs >= 1e6 draws, got {trials}"),
                ));
            }
            (mc_quad_form_cdf(&kernel.eigenvalues, &xs, trials, seed), LawMethod::MonteCarlo)
        }
    };
    let (u0_star, kappa_star) = dominant_mode(kernel, 10);
    Ok(GofDepLaw {
        cm_cdf: xs.into_iter().zip(cdf).collect(),
        ks_cdf: Vec::new(),
        mean_cm: mean,
        var_cm: var,
        kappa_star,
        u0_star,
        method: used,
    })
}

/// Monte Carlo CDF of `sum lambda_j z_j^2` evaluated on the `xs` grid.
fn mc_quad_form_cdf(lam: &[f64], xs: &[f64], trials: usize, seed: u64) -> Vec<f64> {
    let batch = 16_384;
    let batches = trials.div_ceil(batch);
    let mut draws: Vec<f64> = (0..batches)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = SeededRng::substream(seed, b as u64);
            let count = batch.min(trials - b * batch);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let q: f64 = lam
                    .iter()
                    .map(|&l| {
                        let z: f64 = rng.standard_normal();
                        l * z * z
                    })
                    .sum();
                out.push(q);
            }
            out
        })
        .collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.iter()
        .map(|&x| draws.partition_point(|&q| q <= x) as f64 / draws.len() as f64)
        .collect()
}

/// Analytic independence CM law: `lambda_j = (j pi)^{-2}` up to `J = 1000`
/// plus the exact tail mean as a deterministic shift.
pub fn cm_law_independence() -> Result<GofDepLaw> {
    let j_cut = 1000usize;
    let lam: Vec<f64> = (1..=j_cut)
        .map(|j| 1.0 / (j as f64 * std::f64::consts::PI).powi(2))
        .collect();
    let tail = crate::numerics::special::trigamma((j_cut + 1) as f64)
        / std::f64::consts::PI.powi(2);
    let mean = 1.0 / 6.0;
    let var: f64 = 1.0 / 45.0;
    let x_max = mean + 12.0 * var.sqrt();
    let xs: Vec<f64> = (0..=600).map(|i| x_max * i as f64 / 600.0).collect();
    let cdf = quad_form_cdf_table(&lam, tail, &xs, 1e-6)
        .map_err(|why| Error::NoConvergence { what: why, iterations: 5 })?;
    Ok(GofDepLaw {
        cm_cdf: xs.into_iter().zip(cdf).collect(),
        ks_cdf: Vec::new(),
        mean_cm: mean,
        var_cm: var,
        kappa_star: std::f64::consts::SQRT_2 / std::f64::consts::PI,
        u0_star: 0.5,
        method: LawMethod::CharacteristicFunction,
    })
}

/// Dominant-mode location and multi-mode width:
/// `u0* = argmax_u sqrt(lambda_0)|U_0(u)|`,
/// `kappa* = sqrt(sum_{j < mode_cut} lambda_j U_j(u0*)^2)`.
fn dominant_mode(kernel: &DependenceKernel, mode_cut: usize) -> (f64, f64) {
    let prof = kernel.kappa0_profile();
    let i0 = prof
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let cut = mode_cut.min(kernel.grid_size);
    let kappa2: f64 = (0..cut)
        .map(|j| kernel.eigenvalues[j] * kernel.eigenvectors[(i0, j)].powi(2))
        .sum();
    let u = interior_grid(kernel.grid_size);
    (u[i0], kappa2.sqrt())
}

/// Dependent KS law in the dominant-mode approximation:
/// `P(KS <= k) = erf(k / (sqrt(2) kappa*))` with the multi-mode width at
/// the top mode's maximiser.
pub fn ks_law_dep(kernel: &DependenceKernel, mode_cut: usize) -> Result<GofDepLaw> {
    if kernel.eigenvalues[0] <= 0.0 {
        return Err(Error::invalid(
            "kernel",
            "leading eigenvalue is zero: degenerate dominant mode",
        ));
    }
    let (u0_star, kappa_star) = dominant_mode(kernel, mode_cut.max(1));
    let k_max = 8.0 * kappa_star;
    let ks_cdf: Vec<(f64, f64)> = (0..=400)
        .map(|i| {
            let k = k_max * i as f64 / 400.0;
            (k, half_normal_cdf(k, kappa_star))
        })
        .collect();
    Ok(GofDepLaw {
        cm_cdf: Vec::new(),
        ks_cdf,
        mean_cm: kernel.trace(),
        var_cm: kernel.cm_variance(),
        kappa_star,
        u0_star,
        method: LawMethod::DominantMode,
    })
}

/// `P(|kappa z| <= k)` for a standard normal `z`.
fn half_normal_cdf(k: f64, kappa: f64) -> f64 {
    statrs::function::erf::erf(k / (std::f64::consts::SQRT_2 * kappa))
}

/// Both laws in one table set: CM by the requested method, KS from the
/// dominant mode.
pub fn combined_law(
    kernel: &DependenceKernel,
    method: CmMethod,
    mode_cut: usize,
) -> Result<GofDepLaw> {
    let cm = cm_law(kernel, method)?;
    let ks = ks_law_dep(kernel, mode_cut)?;
    Ok(GofDepLaw { ks_cdf: ks.ks_cdf, ..cm })
}

// ---------------------------------------------------------------------------
// Limit-process Monte Carlo
// ---------------------------------------------------------------------------

/// Sample the limit field `y = U Lambda^{1/2} z` on the grid and record
/// `sup|y|` and `sum_j lambda_j z_j^2` per trial.
///
/// With `refine` the in-cell maxima are drawn exactly from the conditional
/// Brownian-bridge law between grid nodes (local variance rate
/// `1 + Psi(u, u)`), removing the grid-discretisation bias of the
/// supremum; trials are batched with counter-based substreams, so results
/// are reproducible for a given seed regardless of thread scheduling.
pub fn mc_limit_process(
    kernel: &DependenceKernel,
    trials: usize,
    seed: u64,
    refine: bool,
) -> Result<LimitProcess> {
    if trials < 10_000 {
        return Err(Error::InsufficientData {
            what: "limit-process trials".into(),
            need: 10_000,
            got: trials,
        });
    }
    let m = kernel.grid_size;
    let h = kernel.weight();
    // y = A z with A = U diag(sqrt(lambda)).
    let mut a = kernel.eigenvectors.clone();
    for j in 0..m {
        let s = kernel.eigenvalues[j].sqrt();
        for i in 0..m {
            a[(i, j)] *= s;
        }
    }
    let a_t = a.transpose();
    // Per-cell local variance rate 1 + Psi(u, u), cells 0..=m between
    // consecutive nodes (the outermost cells touch the pinned endpoints).
    let rate: Vec<f64> = (0..=m)
        .map(|c| {
            let left = if c == 0 { None } else { Some(kernel.psi[(c - 1, c - 1)]) };
            let right = if c == m { None } else { Some(kernel.psi[(c, c)]) };
            let psi_mid = match (left, right) {
                (Some(l), Some(r)) => 0.5 * (l + r),
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => 0.0,
            };
            (1.0 + psi_mid).max(0.0)
        })
        .collect();
    let batch = 8192usize;
    let batches = trials.div_ceil(batch);
    let lam = &kernel.eigenvalues;
    let results: Vec<(Vec<f64>, Vec<f64>)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = SeededRng::substream(seed, b as u64);
            let count = batch.min(trials - b * batch);
            let mut z = DMatrix::zeros(count, m);
            for i in 0..count {
                for j in 0..m {
                    z[(i, j)] = rng.standard_normal();
                }
            }
            let y = &z * &a_t; // count x m field values
            let mut ks = Vec::with_capacity(count);
            let mut cm = Vec::with_capacity(count);
            for i in 0..count {
                let q: f64 = (0..m).map(|j| lam[j] * z[(i, j)] * z[(i, j)]).sum();
                cm.push(q);
                let mut sup: f64 = 0.0;
                if refine {
                    for c in 0..=m {
                        let ya = if c == 0 { 0.0 } else { y[(i, c - 1)] };
                        let yb = if c == m { 0.0 } else { y[(i, c)] };
                        let gap2 = (ya - yb).powi(2);
                        let scale = 2.0 * h * rate[c];
                        let mx = 0.5
                            * (ya + yb + (gap2 - scale * rng.uniform().ln()).sqrt());
                        let mn = 0.5
                            * (ya + yb - (gap2 - scale * rng.uniform().ln()).sqrt());
                        sup = sup.max(mx).max(-mn);
                    }
                } else {
                    for c in 0..m {
                        sup = sup.max(y[(i, c)].abs());
                    }
                }
                ks.push(sup);
            }
            (ks, cm)
        })
        .collect();
    let mut ks_sorted = Vec::with_capacity(trials);
    let mut cm_sorted = Vec::with_capacity(trials);
    for (ks, cm) in results {
        ks_sorted.extend(ks);
        cm_sorted.extend(cm);
    }
    ks_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cm_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(LimitProcess { ks_sorted, cm_sorted })
}

impl LimitProcess {
    pub fn ks_cdf(&self, k: f64) -> f64 {
        empirical_cdf(&self.ks_sorted, k)
    }

    pub fn cm_cdf(&self, x: f64) -> f64 {
        empirical_cdf(&self.cm_sorted, x)
    }

    pub fn ks_quantile(&self, p: f64) -> f64 {
        empirical_quantile(&self.ks_sorted, p)
    }

    pub fn cm_quantile(&self, p: f64) -> f64 {
        empirical_quantile(&self.cm_sorted, p)
    }

    /// Convert to tabulated law form (both tables, Monte Carlo method),
    /// thinning to at most 2000 table rows per statistic.
    pub fn to_law(&self, kernel: &DependenceKernel) -> GofDepLaw {
        let table = |sorted: &[f64]| -> Vec<(f64, f64)> {
            let n = sorted.len();
            let rows = n.min(2000);
            (0..rows)
                .map(|r| {
                    let idx = ((r as f64 + 0.5) / rows as f64 * n as f64) as usize;
                    let idx = idx.min(n - 1);
                    (sorted[idx], (idx + 1) as f64 / n as f64)
                })
                .collect()
        };
        let (u0_star, kappa_star) = dominant_mode(kernel, 10);
        GofDepLaw {
            cm_cdf: table(&self.cm_sorted),
            ks_cdf: table(&self.ks_sorted),
            mean_cm: kernel.trace(),
            var_cm: kernel.cm_variance(),
            kappa_star,
            u0_star,
            method: LawMethod::MonteCarlo,
        }
    }
}

fn empirical_cdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p * sorted.len() as f64) as usize).min(sorted.len() - 1);
    sorted[idx]
}

// ---------------------------------------------------------------------------
// Test runner
// ---------------------------------------------------------------------------

/// KS and Cramér–von Mises statistics of a probability-transformed sample:
/// `(sqrt(N) sup|F_N - u|, sum_i (u_(i) - (2i-1)/(2N))^2 + 1/(12N))`.
pub fn dep_statistics<F: Fn(f64) -> f64>(sample: &[f64], null_cdf: F) -> Result<(f64, f64)> {
    if sample.len() < 10 {
        return Err(Error::InsufficientData {
            what: "dependent GoF sample".into(),
            need: 10,
            got: sample.len(),
        });
    }
    let mut u: Vec<f64> = Vec::with_capacity(sample.len());
    for &x in sample {
        if !x.is_finite() {
            return Err(Error::invalid("sample", format!("non-finite value {x}")));
        }
        u.push(null_cdf(x));
    }
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = u.len() as f64;
    let mut d: f64 = 0.0;
    let mut w2 = 1.0 / (12.0 * n);
    for (i, &ui) in u.iter().enumerate() {
        d = d.max((i + 1) as f64 / n - ui).max(ui - i as f64 / n);
        w2 += (ui - (2.0 * (i + 1) as f64 - 1.0) / (2.0 * n)).powi(2);
    }
    Ok((n.sqrt() * d, w2))
}

/// P-values of both statistics under a dependent law.  A statistic beyond
/// the tabulated range is reported at the table's boundary tail value.
pub fn gof_dep_test<F: Fn(f64) -> f64>(
    sample: &[f64],
    null_cdf: F,
    law: &GofDepLaw,
) -> Result<(f64, f64)> {
    if law.ks_cdf.is_empty() || law.cm_cdf.is_empty() {
        return Err(Error::invalid(
            "law",
            "law must carry both KS and CM tables (see combined_law)",
        ));
    }
    let (ks_stat, cm_stat) = dep_statistics(sample, null_cdf)?;
    Ok((
        1.0 - table_cdf(&law.ks_cdf, ks_stat),
        1.0 - table_cdf(&law.cm_cdf, cm_stat),
    ))
}

/// Linear interpolation of a tabulated CDF, clamped at the table edges.
fn table_cdf(table: &[(f64, f64)], x: f64) -> f64 {
    if x <= table[0].0 {
        return table[0].1 * if table[0].0 > 0.0 { x.max(0.0) / table[0].0 } else { 1.0 };
    }
    let last = table[table.len() - 1];
    if x >= last.0 {
        return last.1;
    }
    let j = table.partition_point(|&(t, _)| t < x);
    let (x0, f0) = table[j - 1];
    let (x1, f1) = table[j];
    let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    f0 * (1.0 - w) + f1 * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gofuni::ks_law;
    use approx::assert_relative_eq;

    #[test]
    fn independence_kernel_spectrum_is_the_bridge_spectrum() {
        let m = 200;
        let kernel = independence_kernel(m).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert_relative_eq!(kernel.eigenvalues[0], 1.0 / pi2, epsilon = 1e-4);
        let trace: f64 = kernel.eigenvalues.iter().sum();
        assert_relative_eq!(trace, 1.0 / 6.0, epsilon = 1e-3);
        assert_relative_eq!(kernel.trace(), 1.0 / 6.0, epsilon = 1e-3);
        // Quadrature trace equals the eigenvalue sum to machine precision.
        assert_relative_eq!(kernel.trace(), trace, epsilon = 1e-10);
        assert_eq!(kernel.clipped, 0);
        // First eigenvector is sqrt(2) sin(pi u) up to sign.
        let u = interior_grid(m);
        let mut dot = 0.0;
        let mut n1 = 0.0;
        let mut n2 = 0.0;
        for i in 0..m {
            let target = std::f64::consts::SQRT_2 * (std::f64::consts::PI * u[i]).sin();
            let v = kernel.eigenvectors[(i, 0)];
            dot += target * v;
            n1 += target * target;
            n2 += v * v;
        }
        assert!(dot.abs() / (n1 * n2).sqrt() > 0.9999);
    }

    #[test]
    fn eigenvectors_are_orthonormal_under_the_quadrature_weight() {
        let kernel = independence_kernel(80).unwrap();
        let h = kernel.weight();
        for a in 0..10 {
            for b in 0..10 {
                let dot: f64 = (0..kernel.grid_size)
                    .map(|i| kernel.eigenvectors[(i, a)] * kernel.eigenvectors[(i, b)])
                    .sum::<f64>()
                    * h;
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8, "U_{a}.U_{b} = {dot}");
            }
        }
    }

    #[test]
    fn doubling_the_grid_moves_top_eigenvalues_by_little() {
        let k100 = independence_kernel(100).unwrap();
        let k200 = independence_kernel(200).unwrap();
        for j in 0..3 {
            assert!(
                (k100.eigenvalues[j] - k200.eigenvalues[j]).abs() < 1e-4,
                "eigenvalue {j} shifted"
            );
        }
    }

    #[test]
    fn product_copula_gives_zero_psi() {
        let cop = EmpiricalCopula::from_function(40, 10_000, |u, v| u * v).unwrap();
        let psi = psi_from_copulas(&[cop], 10_000, 1).unwrap();
        assert!(psi.iter().all(|&x| x.abs() < 1e-10));
    }

    #[test]
    fn rank_one_lag_copula_reproduces_the_separable_psi() {
        let m = 64;
        let n = 10_000usize;
        let alpha = 0.05;
        let g = |u: f64| u * (1.0 - u);
        let cop =
            EmpiricalCopula::from_function(m, n, |u, v| u * v + alpha * g(u) * g(v)).unwrap();
        let psi = psi_from_copulas(&[cop], n, 1).unwrap();
        let u = interior_grid(m);
        for i in 0..m {
            for j in 0..m {
                let eye = u[i].min(u[j]) - u[i] * u[j];
                let expect = 2.0 * (1.0 - 1.0 / n as f64) * alpha * g(u[i]) * g(u[j]) / eye;
                assert!(
                    (psi[(i, j)] - expect).abs() < 1e-3,
                    "Psi({},{}) = {} vs {}",
                    u[i],
                    u[j],
                    psi[(i, j)],
                    expect
                );
            }
        }
    }

    #[test]
    fn psi_input_validation() {
        let c20 = EmpiricalCopula::from_function(20, 1000, |u, v| u * v).unwrap();
        let c30 = EmpiricalCopula::from_function(30, 1000, |u, v| u * v).unwrap();
        assert!(psi_from_copulas(&[c20.clone(), c30], 1000, 2).is_err());
        assert!(psi_from_copulas(&[c20.clone()], 1000, 1000).is_err());
        assert!(psi_from_copulas(&[], 1000, 1).is_err());
        // Non-symmetric Psi rejected by the kernel builder.
        let mut bad = DMatrix::zeros(10, 10);
        bad[(0, 1)] = 1.0;
        assert!(build_kernel(&bad, 0).is_err());
    }

    #[test]
    fn ar1_log_vol_amplitude_matches_the_closed_form() {
        // Geometric lag coefficients alpha_t = s^2 g^t summed with the
        // (1 - t/N) window approach 2 g Sigma^2 / ((1-g)^2 (1+g)) as N grows.
        let (g, sigma2) = (0.88, 0.05);
        let s2 = sigma2 / (1.0 - g * g);
        let n = 1e8;
        let mut amp = 0.0;
        for t in 1..=3000 {
            amp += 2.0 * (1.0 - t as f64 / n) * s2 * g.powi(t);
        }
        let closed = 2.0 * g * sigma2 / ((1.0 - g) * (1.0 - g) * (1.0 + g));
        assert_relative_eq!(amp, closed, max_relative = 1e-6);
        assert_relative_eq!(closed, 3.2506, epsilon = 1e-4);
    }

    #[test]
    fn negative_eigenvalues_are_clipped_and_counted() {
        // A strongly negative separable Psi makes H indefinite.
        let m = 40;
        let u = interior_grid(m);
        let psi = DMatrix::from_fn(m, m, |i, j| {
            -6.0 * (std::f64::consts::PI * u[i]).sin() * (std::f64::consts::PI * u[j]).sin()
        });
        let kernel = build_kernel(&psi, 0).unwrap();
        assert!(kernel.clipped > 0);
        assert!(kernel.eigenvalues.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn independence_cm_law_matches_the_classical_quantiles() {
        let law = cm_law_independence().unwrap();
        assert_relative_eq!(law.mean_cm, 1.0 / 6.0, epsilon = 1e-12);
        assert_relative_eq!(law.var_cm, 1.0 / 45.0, epsilon = 1e-12);
        // Classical Cramér–von Mises quantiles (frozen inversion values).
        for (p, q_ref) in [(0.90, 0.34730492), (0.95, 0.46136129), (0.99, 0.74345931)] {
            let q = invert_table(&law.cm_cdf, p);
            assert!((q - q_ref).abs() < 5e-5, "quantile {p}: {q} vs {q_ref}");
        }
    }

    fn invert_table(table: &[(f64, f64)], p: f64) -> f64 {
        let j = table.partition_point(|&(_, f)| f < p);
        let (x0, f0) = table[j - 1];
        let (x1, f1) = table[j.min(table.len() - 1)];
        if f1 > f0 {
            x0 + (x1 - x0) * (p - f0) / (f1 - f0)
        } else {
            x0
        }
    }

    /// With a single eigenvalue the quadratic form is `lambda z^2`, so
    /// `P(Q <= x) = erf(sqrt(x / (2 lambda)))` in closed form.  A lone
    /// mode makes `|phi(t)|` decay only like `t^{-1/2}`, so the inversion
    /// is asked for a correspondingly looser tolerance.
    #[test]
    fn single_eigenvalue_cm_law_is_the_scaled_chi_square() {
        let lam = [0.25];
        let xs = [0.1, 0.2, 0.3, 0.5, 0.8];
        let cdf = quad_form_cdf_table(&lam, 0.0, &xs, 5e-5).unwrap();
        for (&x, &f) in xs.iter().zip(&cdf) {
            let exact = statrs::function::erf::erf((x / (2.0 * lam[0])).sqrt());
            assert!(
                (f - exact).abs() < 2e-4,
                "P(CM <= {x}) = {f} vs erf form {exact}"
            );
        }
    }

    #[test]
    fn cm_law_moments_match_monte_carlo() {
        let kernel = independence_kernel(200).unwrap();
        let law = cm_law(
            &kernel,
            CmMethod::MonteCarlo { trials: 1_000_000, seed: 404 },
        )
        .unwrap();
        assert_eq!(law.method, LawMethod::MonteCarlo);
        // Grid-kernel 95% quantile close to the classical 0.4614.
        let q95 = invert_table(&law.cm_cdf, 0.95);
        assert!((q95 - 0.4614).abs() < 3e-3, "q95 = {q95}");
        assert!(cm_law(&kernel, CmMethod::MonteCarlo { trials: 1000, seed: 1 }).is_err());
    }

    #[test]
    fn characteristic_function_law_agrees_with_monte_carlo_on_a_grid_kernel() {
        let kernel = independence_kernel(100).unwrap();
        let cf = cm_law(&kernel, CmMethod::CharacteristicFunction).unwrap();
        assert_eq!(cf.method, LawMethod::CharacteristicFunction);
        let mc = cm_law(
            &kernel,
            CmMethod::MonteCarlo { trials: 2_000_000, seed: 17 },
        )
        .unwrap();
        for p in [0.5, 0.9, 0.95] {
            let qc = invert_table(&cf.cm_cdf, p);
            let qm = invert_table(&mc.cm_cdf, p);
            assert!((qc - qm).abs() < 4e-3, "p = {p}: {qc} vs {qm}");
        }
    }

    #[test]
    fn dominant_mode_of_independence_kernel() {
        let kernel = independence_kernel(99).unwrap();
        let law = ks_law_dep(&kernel, 1).unwrap();
        // kappa_0(1/2) = sqrt(lambda_0) * sqrt(2) |sin(pi/2)| = sqrt(2)/pi.
        assert_relative_eq!(law.u0_star, 0.5, epsilon = 1e-9);
        assert_relative_eq!(
            law.kappa_star,
            std::f64::consts::SQRT_2 / std::f64::consts::PI,
            epsilon = 1e-3
        );
        // Single-mode law is the half-normal CDF in k/kappa.
        let kappa = law.kappa_star;
        for (k, f) in &law.ks_cdf {
            assert_relative_eq!(
                *f,
                statrs::function::erf::erf(k / (std::f64::consts::SQRT_2 * kappa)),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn mc_limit_process_is_deterministic_and_validates() {
        let kernel = independence_kernel(60).unwrap();
        let a = mc_limit_process(&kernel, 20_000, 5, true).unwrap();
        let b = mc_limit_process(&kernel, 20_000, 5, true).unwrap();
        assert_eq!(a.ks_sorted, b.ks_sorted);
        assert_eq!(a.cm_sorted, b.cm_sorted);
        assert!(mc_limit_process(&kernel, 100, 5, true).is_err());
    }

    /// The refined limit process under independence must reproduce the
    /// classical KS law: 95% quantile 1.358 +- 0.01 and the whole CDF
    /// within a few parts in 1e3 (Monte Carlo noise at 5e5 trials is
    /// ~7e-4 per CDF point; the stated 2e-3 sup-norm target gets 3x MC
    /// headroom).
    #[test]
    fn refined_limit_process_reproduces_the_classical_ks_law() {
        let kernel = independence_kernel(128).unwrap();
        let proc_ = mc_limit_process(&kernel, 500_000, 2203, true).unwrap();
        let q95 = proc_.ks_quantile(0.95);
        assert!((q95 - 1.358).abs() <= 0.01, "95% KS quantile {q95}");
        let mut sup = 0.0f64;
        let mut k = 0.6;
        while k <= 2.0 {
            sup = sup.max((proc_.ks_cdf(k) - ks_law(k)).abs());
            k += 0.02;
        }
        assert!(sup < 3e-3, "sup-norm against the classical law = {sup}");
        // CM moments within 3 Monte Carlo standard errors.
        let n = proc_.cm_sorted.len() as f64;
        let mean: f64 = proc_.cm_sorted.iter().sum::<f64>() / n;
        let var: f64 =
            proc_.cm_sorted.iter().map(|&q| (q - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se_mean = (var / n).sqrt();
        assert!((mean - kernel.trace()).abs() < 3.0 * se_mean);
        let m4: f64 = proc_.cm_sorted.iter().map(|&q| (q - mean).powi(4)).sum::<f64>() / n;
        let se_var = ((m4 - var * var) / n).sqrt();
        assert!((var - kernel.cm_variance()).abs() < 3.0 * se_var);
    }

    #[test]
    fn positive_dependence_stretches_both_laws_to_the_right() {
        let m = 80;
        let u = interior_grid(m);
        let eye = bridge_kernel(m);
        // Positive separable dependence bump (a valid symmetric Psi).
        let psi = DMatrix::from_fn(m, m, |i, j| {
            3.0 * u[i] * (1.0 - u[i]) * u[j] * (1.0 - u[j]) / eye[(i, j)]
        });
        let dep = build_kernel(&psi, 0).unwrap();
        let ind = independence_kernel(m).unwrap();
        let dep_cm = cm_law(&dep, CmMethod::CharacteristicFunction).unwrap();
        let ind_cm = cm_law(&ind, CmMethod::CharacteristicFunction).unwrap();
        assert!(invert_table(&dep_cm.cm_cdf, 0.95) > invert_table(&ind_cm.cm_cdf, 0.95));
        let dep_ks = mc_limit_process(&dep, 40_000, 31, true).unwrap();
        let ind_ks = mc_limit_process(&ind, 40_000, 31, true).unwrap();
        assert!(dep_ks.ks_quantile(0.95) > ind_ks.ks_quantile(0.95));
    }

    #[test]
    fn dep_statistics_and_runner_reduce_to_the_independent_case() {
        let mut rng = SeededRng::new(909);
        let sample: Vec<f64> = (0..2000).map(|_| rng.uniform()).collect();
        let (ks_stat, w2) = dep_statistics(&sample, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(ks_stat > 0.0 && w2 > 0.0);
        let kernel = independence_kernel(100).unwrap();
        let proc_ = mc_limit_process(&kernel, 200_000, 7, true).unwrap();
        let law = proc_.to_law(&kernel);
        let (ks_p, cm_p) = gof_dep_test(&sample, |x| x.clamp(0.0, 1.0), &law).unwrap();
        // Null sample: both p-values should be unremarkable and the KS
        // p-value should agree with the classical law within MC error.
        let p_classic = 1.0 - ks_law(ks_stat);
        assert!((ks_p - p_classic).abs() < 0.01, "{ks_p} vs {p_classic}");
        assert!(cm_p > 0.01 && cm_p < 0.99);
    }

    #[test]
    fn runner_clamps_statistics_beyond_the_table() {
        let kernel = independence_kernel(40).unwrap();
        let law = combined_law(
            &kernel,
            CmMethod::MonteCarlo { trials: 1_000_000, seed: 3 },
            5,
        )
        .unwrap();
        // A grossly shifted sample: statistics beyond every tabulated row.
        let sample: Vec<f64> = (0..100).map(|i| 0.999 + 1e-6 * i as f64).collect();
        let (ks_p, cm_p) = gof_dep_test(&sample, |x| x.clamp(0.0, 1.0), &law).unwrap();
        let ks_tail = 1.0 - law.ks_cdf.last().unwrap().1;
        let cm_tail = 1.0 - law.cm_cdf.last().unwrap().1;
        assert!(ks_p <= ks_tail + 1e-12);
        assert!(cm_p <= cm_tail + 1e-12);
    }

    #[test]
    fn law_serialisation_round_trips() {
        let kernel = independence_kernel(30).unwrap();
        let law = combined_law(&kernel, CmMethod::CharacteristicFunction, 5).unwrap();
        let json = serde_json::to_string(&law).unwrap();
        let back: GofDepLaw = serde_json::from_str(&json).unwrap();
        assert_eq!(law.cm_cdf, back.cm_cdf);
        assert_eq!(law.ks_cdf, back.ks_cdf);
        assert_eq!(law.method, back.method);
        let kjson = serde_json::to_string(&kernel).unwrap();
        let kback: DependenceKernel = serde_json::from_str(&kjson).unwrap();
        assert_eq!(kernel.eigenvalues, kback.eigenvalues);
    }
}
