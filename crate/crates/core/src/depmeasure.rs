//! Empirical copula estimation and bivariate dependence measurement.
//!
//! The central object is [`EmpiricalCopula`]: a rank-based estimate of the
//! copula on a regular M×M grid with an optional finite-sample bias
//! correction.  On top of it the module provides the full set of bivariate
//! dependence diagnostics: linear and rank correlations, signed- and
//! absolute-power correlations, tail-dependence coefficients in all four
//! quadrants, deviations from the Gaussian copula along the two diagonals,
//! and conditional event probabilities / expected shortfalls for lagged
//! series.
//!
//! All copula-based quantities depend on the data only through ranks, hence
//! are invariant under strictly increasing transformations of each margin.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::bvn;
use crate::numerics::special::{norm_pdf, norm_ppf};

/// Rank-based copula estimate on the grid nodes (i/M, j/M), i,j = 1..M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCopula {
    grid_size: usize,
    /// values[(i-1, j-1)] = Ĉ(i/M, j/M).
    values: DMatrix<f64>,
    sample_size: usize,
    bias_corrected: bool,
    /// Lag ℓ when the copula couples (x_{t−ℓ}, x_t) of a single series; the
    /// first grid coordinate is the past margin, the second the present one.
    lag: Option<usize>,
}

/// Quadrant selector for tail-dependence coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailQuadrant {
    /// Both margins in their upper tail.
    UpperUpper,
    /// Both margins in their lower tail.
    LowerLower,
    /// First margin upper, second margin lower.
    UpperLower,
    /// First margin lower, second margin upper.
    LowerUpper,
}

/// Tail-dependence coefficients of all four quadrants at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCoefficients {
    pub p: f64,
    pub uu: f64,
    pub ll: f64,
    pub ul: f64,
    pub lu: f64,
}

/// Conditional sign-event probabilities for a lagged pair; the first
/// subscript is the past (conditioning) event, the second the present one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalProbs {
    /// P(X_t > v₊ | X_{t−ℓ} > v₊)
    pub pp: f64,
    /// P(X_t < −v₋ | X_{t−ℓ} < −v₋)
    pub mm: f64,
    /// P(X_t > v₊ | X_{t−ℓ} < −v₋)
    pub mp: f64,
    /// P(X_t < −v₋ | X_{t−ℓ} > v₊)
    pub pm: f64,
}

/// Sample conditional location statistics of X_t given a tail event of
/// X_{t−ℓ}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalShortfall {
    pub mean_plus: f64,
    pub mean_minus: f64,
    pub median_plus: f64,
    pub median_minus: f64,
    pub count_plus: usize,
    pub count_minus: usize,
    pub threshold_plus: f64,
    pub threshold_minus: f64,
}

/// The full set of bivariate dependence diagnostics for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceProfile {
    pub pearson: f64,
    pub spearman: f64,
    pub kendall: f64,
    pub blomqvist: f64,
    /// Effective correlation read off the copula at the medial point.
    pub effective: f64,
    /// (d, correlation of sign(x)|x|^d with sign(y)|y|^d) per requested d.
    pub signed_power: Vec<(f64, f64)>,
    /// (d, correlation of |x|^d with |y|^d) per requested d > 0.
    pub absolute_power: Vec<(f64, f64)>,
    /// Tail coefficients at each requested level.
    pub tails: Vec<TailCoefficients>,
    /// (u, Δ_d(u)) — copula-vs-Gaussian deviation along the main diagonal.
    pub delta_diagonal: Vec<(f64, f64)>,
    /// (u, Δ_a(u)) — same along the anti-diagonal.
    pub delta_antidiagonal: Vec<(f64, f64)>,
}

/// Default copula grid size for a sample of length `t`.
pub fn default_grid(t: usize) -> usize {
    (t / 10).clamp(2, 100)
}

/// Ranks 1..=N with ties broken by stable input order.
pub fn ranks(x: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut r = vec![0usize; x.len()];
    for (pos, &idx) in order.iter().enumerate() {
        r[idx] = pos + 1;
    }
    r
}

/// Rank-based copula estimate of a bivariate sample on an M×M grid.
///
/// At the node (u, v) = (i/M, j/M) the raw estimator is the fraction of
/// observations with both normalized ranks at or below the node.  With
/// `correct_bias` the node value is multiplied by (Nu/⌊Nu⌋)(Nv/⌊Nv⌋), which
/// removes the O(1/N) downward bias of off-lattice nodes; factors with a
/// vanishing floor are left at 1.
pub fn empirical_copula(x: &[f64], y: &[f64], m: usize, correct_bias: bool) -> Result<EmpiricalCopula> {
    build_copula(x, y, m, correct_bias, None)
}

/// Self-copula of a series at lag ℓ: the copula of the pairs
/// (x_{t−ℓ}, x_t), with the past value on the first margin.
pub fn lag_copula(x: &[f64], lag: usize, m: usize, correct_bias: bool) -> Result<EmpiricalCopula> {
    if lag == 0 || lag >= x.len() {
        return Err(Error::invalid("lag", "lag must satisfy 1 ≤ ℓ < T"));
    }
    let past = &x[..x.len() - lag];
    let present = &x[lag..];
    build_copula(past, present, m, correct_bias, Some(lag))
}

fn build_copula(
    x: &[f64],
    y: &[f64],
    m: usize,
    correct_bias: bool,
    lag: Option<usize>,
) -> Result<EmpiricalCopula> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::invalid("series", "x and y must have equal length"));
    }
    if m < 2 {
        return Err(Error::invalid("grid_size", "need M ≥ 2"));
    }
    if m > n {
        return Err(Error::Resolution { m, t: n });
    }
    let rx = ranks(x);
    let ry = ranks(y);
    // Observation t contributes to node (i, j) iff rank ≤ ⌊i·N/M⌋, i.e. for
    // all i ≥ ceil(rank·M/N); bin once and prefix-sum.
    let mut hist = vec![vec![0u32; m]; m];
    for t in 0..n {
        let a = (rx[t] * m).div_ceil(n) - 1;
        let b = (ry[t] * m).div_ceil(n) - 1;
        hist[a][b] += 1;
    }
    let mut values = DMatrix::zeros(m, m);
    let mut cum = vec![0u64; m];
    for i in 0..m {
        let mut row_cum = 0u64;
        for j in 0..m {
            row_cum += u64::from(hist[i][j]);
            cum[j] += row_cum;
            let mut val = cum[j] as f64 / n as f64;
            if correct_bias {
                val *= bias_factor(i + 1, n, m) * bias_factor(j + 1, n, m);
            }
            values[(i, j)] = val;
        }
    }
    Ok(EmpiricalCopula { grid_size: m, values, sample_size: n, bias_corrected: correct_bias, lag })
}

/// Correction factor Nu/⌊Nu⌋ at u = i/M (1 when the floor vanishes).
fn bias_factor(i: usize, n: usize, m: usize) -> f64 {
    let floor = (i * n) / m;
    if floor == 0 {
        1.0
    } else {
        (i * n) as f64 / (m * floor) as f64
    }
}

impl EmpiricalCopula {
    /// Build a copula from externally supplied node values (M×M matrix of
    /// Ĉ(i/M, j/M)); used for synthetic reference grids and deserialization.
    pub fn from_values(values: DMatrix<f64>, sample_size: usize, bias_corrected: bool, lag: Option<usize>) -> Result<Self> {
        let (r, c) = values.shape();
        if r != c || r < 2 {
            return Err(Error::invalid("values", "need a square grid with M ≥ 2"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "grid values must be finite"));
        }
        Ok(Self { grid_size: r, values, sample_size, bias_corrected, lag })
    }

    /// Tabulate an analytic copula C(u,v) on an M×M grid.
    pub fn from_function<F: Fn(f64, f64) -> f64>(m: usize, sample_size: usize, f: F) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid("grid_size", "need M ≥ 2"));
        }
        let values = DMatrix::from_fn(m, m, |i, j| f((i + 1) as f64 / m as f64, (j + 1) as f64 / m as f64));
        Self::from_values(values, sample_size, false, None)
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn bias_corrected(&self) -> bool {
        self.bias_corrected
    }

    pub fn lag(&self) -> Option<usize> {
        self.lag
    }

    /// Grid nodes i/M, i = 1..M.
    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.grid_size).map(|i| i as f64 / self.grid_size as f64).collect()
    }

    /// Node value Ĉ(i/M, j/M) for 1-based node indices.
    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[(i - 1, j - 1)]
    }

    /// Bilinear interpolation of Ĉ(u, v) between grid nodes, with the exact
    /// boundary values Ĉ(0,·) = Ĉ(·,0) = 0.
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let (i0, fu) = split_cell(u, self.grid_size);
        let (j0, fv) = split_cell(v, self.grid_size);
        let at = |i: usize, j: usize| -> f64 {
            if i == 0 || j == 0 {
                0.0
            } else {
                self.values[(i - 1, j - 1)]
            }
        };
        (1.0 - fu) * (1.0 - fv) * at(i0, j0)
            + fu * (1.0 - fv) * at(i0 + 1, j0)
            + (1.0 - fu) * fv * at(i0, j0 + 1)
            + fu * fv * at(i0 + 1, j0 + 1)
    }

    /// Diagonal value Ĉ(u, u).
    pub fn diagonal(&self, u: f64) -> f64 {
        self.eval(u, u)
    }

    /// Tail-dependence coefficient at level p in the requested quadrant.
    ///
    /// With C the copula and p ∈ (0, 1):
    /// upper-upper (1 − 2p + C(p,p))/(1 − p); lower-lower C(1−p, 1−p)/(1−p);
    /// mixed quadrants (1 − p − C(p, 1−p))/(1 − p) and symmetrically.
    pub fn tail_dependence(&self, p: f64, quadrant: TailQuadrant) -> Result<f64> {
        if !(0.0 < p && p < 1.0) {
            return Err(Error::invalid("p", "tail level must lie in (0, 1)"));
        }
        let q = 1.0 - p;
        let value = match quadrant {
            TailQuadrant::UpperUpper => (1.0 - 2.0 * p + self.eval(p, p)) / q,
            TailQuadrant::LowerLower => self.eval(q, q) / q,
            TailQuadrant::UpperLower => (q - self.eval(p, q)) / q,
            TailQuadrant::LowerUpper => (q - self.eval(q, p)) / q,
        };
        Ok(value)
    }

    /// All four tail coefficients at one level.
    pub fn tail_coefficients(&self, p: f64) -> Result<TailCoefficients> {
        Ok(TailCoefficients {
            p,
            uu: self.tail_dependence(p, TailQuadrant::UpperUpper)?,
            ll: self.tail_dependence(p, TailQuadrant::LowerLower)?,
            ul: self.tail_dependence(p, TailQuadrant::UpperLower)?,
            lu: self.tail_dependence(p, TailQuadrant::LowerUpper)?,
        })
    }

    /// Largest violation of the Fréchet–Hoeffding bounds over the grid,
    /// measured beyond the allowed estimation slack δ.
    pub fn frechet_violation(&self, delta: f64) -> f64 {
        let m = self.grid_size;
        let mut worst = 0.0f64;
        for i in 1..=m {
            for j in 1..=m {
                let u = i as f64 / m as f64;
                let v = j as f64 / m as f64;
                let c = self.node(i, j);
                let lower = (u + v - 1.0).max(0.0) - delta;
                let upper = u.min(v) + delta;
                worst = worst.max(lower - c).max(c - upper);
            }
        }
        worst
    }

    /// Serialize the grid as CSV with node headers on the first row/column.
    pub fn to_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        let mut header = vec!["u\\v".to_string()];
        header.extend(self.nodes().iter().map(|v| format!("{v:.10}")));
        writer.write_record(&header)?;
        for i in 1..=self.grid_size {
            let mut row = vec![format!("{:.10}", i as f64 / self.grid_size as f64)];
            row.extend((1..=self.grid_size).map(|j| format!("{:.12e}", self.node(i, j))));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Read a grid back from the CSV layout written by [`Self::to_csv`].
    pub fn from_csv<R: Read>(source: R, sample_size: usize, bias_corrected: bool) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(Error::from)?;
            let row = record
                .iter()
                .skip(1)
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::MalformedInput(format!("bad grid value {f:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let m = rows.len();
        if m < 2 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::MalformedInput("copula CSV must hold a square grid with M ≥ 2".into()));
        }
        let values = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
        Self::from_values(values, sample_size, bias_corrected, None)
    }
}

/// Locate u within the grid: returns the lower node index (0 = boundary) and
/// the fractional position inside the cell.
fn split_cell(u: f64, m: usize) -> (usize, f64) {
    let scaled = (u.clamp(0.0, 1.0)) * m as f64;
    let mut i0 = scaled.floor() as usize;
    if i0 >= m {
        i0 = m - 1;
    }
    (i0, scaled - i0 as f64)
}

/// Pearson linear correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    correlation_named(x, y, "x", "y")
}

fn correlation_named(x: &[f64], y: &[f64], name_x: &str, name_y: &str) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("series", "need two equal-length series with ≥ 2 points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 {
        return Err(Error::ZeroVariance { name: name_x.into() });
    }
    if syy <= 0.0 {
        return Err(Error::ZeroVariance { name: name_y.into() });
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation: Pearson correlation of the rank vectors.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    let rx: Vec<f64> = ranks(x).into_iter().map(|r| r as f64).collect();
    let ry: Vec<f64> = ranks(y).into_iter().map(|r| r as f64).collect();
    pearson(&rx, &ry)
}

/// Kendall's τ via inversion counting (merge sort), O(N log N).
///
/// Ties are broken by stable input order, matching the rank convention used
/// everywhere else in the module.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if y.len() != n || n < 2 {
        return Err(Error::invalid("series", "need two equal-length series with ≥ 2 points"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let ry = ranks(y);
    let mut seq: Vec<u64> = order.iter().map(|&i| ry[i] as u64).collect();
    let mut buf = vec![0u64; n];
    let discordant = count_inversions(&mut seq, &mut buf);
    let pairs = (n as u64 * (n as u64 - 1)) / 2;
    Ok(1.0 - 4.0 * discordant as f64 / (2.0 * pairs as f64))
}

fn count_inversions(seq: &mut [u64], buf: &mut [u64]) -> u64 {
    let n = seq.len();
    if n <= 1 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = seq.split_at_mut(mid);
    let mut inv = count_inversions(left, &mut buf[..mid]) + count_inversions(right, &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0usize, 0usize, 0usize);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            buf[k] = left[i];
            i += 1;
        } else {
            buf[k] = right[j];
            inv += (left.len() - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + left.len() - i].copy_from_slice(&left[i..]);
    buf[k + left.len() - i..n].copy_from_slice(&right[j..]);
    seq.copy_from_slice(&buf[..n]);
    inv
}

/// Full dependence profile of a pair.
///
/// `d_list` selects the powers for the signed- and absolute-power
/// correlations (the absolute family skips d = 0, whose transform is
/// constant); `p_list` the tail levels, which must lie in (½, 1).  The
/// diagonal deviations are measured against the Gaussian copula with the
/// sample's own linear correlation.
pub fn dependence_coefficients(
    x: &[f64],
    y: &[f64],
    d_list: &[f64],
    p_list: &[f64],
) -> Result<DependenceProfile> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::invalid("series", "x and y must have equal length"));
    }
    if n < 10 {
        return Err(Error::InsufficientData { what: "observations".into(), need: 10, got: n });
    }
    if let Some(&p) = p_list.iter().find(|&&p| !(0.5 < p && p < 1.0)) {
        return Err(Error::invalid("p_list", format!("tail level {p} outside (1/2, 1)")));
    }

    let pearson_rho = pearson(x, y)?;
    let cop = empirical_copula(x, y, default_grid(n), true)?;
    let c_half = cop.eval(0.5, 0.5);

    let mut signed_power = Vec::with_capacity(d_list.len());
    let mut absolute_power = Vec::new();
    for &d in d_list {
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::invalid("d_list", format!("power d = {d} must be finite and ≥ 0")));
        }
        let sx: Vec<f64> = x.iter().map(|&v| signed_power_transform(v, d)).collect();
        let sy: Vec<f64> = y.iter().map(|&v| signed_power_transform(v, d)).collect();
        let name = format!("d={d}");
        signed_power.push((d, correlation_named(&sx, &sy, &name, &name)?));
        if d > 0.0 {
            let ax: Vec<f64> = x.iter().map(|&v| v.abs().powf(d)).collect();
            let ay: Vec<f64> = y.iter().map(|&v| v.abs().powf(d)).collect();
            let name = format!("a,d={d}");
            absolute_power.push((d, correlation_named(&ax, &ay, &name, &name)?));
        }
    }

    let tails = p_list.iter().map(|&p| cop.tail_coefficients(p)).collect::<Result<Vec<_>>>()?;
    let (delta_diagonal, delta_antidiagonal) = copula_vs_gaussian(&cop, pearson_rho)?;

    Ok(DependenceProfile {
        pearson: pearson_rho,
        spearman: spearman_rho(x, y)?,
        kendall: kendall_tau(x, y)?,
        blomqvist: 4.0 * c_half - 1.0,
        effective: effective_correlation(c_half),
        signed_power,
        absolute_power,
        tails,
        delta_diagonal,
        delta_antidiagonal,
    })
}

fn signed_power_transform(v: f64, d: f64) -> f64 {
    if d == 0.0 {
        // sign(v): the d → 0 limit of sign(v)|v|^d.
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    } else {
        v.signum() * v.abs().powf(d)
    }
}

/// Effective correlation implied by the copula value at the medial point:
/// the r solving C(½,½) = ¼ + arcsin(r)/(2π).
pub fn effective_correlation(c_half: f64) -> f64 {
    (2.0 * std::f64::consts::PI * (c_half - 0.25)).sin()
}

/// Deviation of a copula from the Gaussian copula with correlation ρ along
/// the main and anti-diagonals, normalized by u(1−u); the grid endpoints are
/// excluded.  Returns (diagonal, anti-diagonal) as (u, Δ(u)) pairs.
pub fn copula_vs_gaussian(
    cop: &EmpiricalCopula,
    rho: f64,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    if !(rho.abs() < 1.0) {
        return Err(Error::DegenerateCorrelation { rho });
    }
    let m = cop.grid_size();
    let mut diag = Vec::with_capacity(m - 1);
    let mut anti = Vec::with_capacity(m - 1);
    for i in 1..m {
        let u = i as f64 / m as f64;
        let w = u * (1.0 - u);
        let g_d = bvn::gauss_copula(u, u, rho);
        let g_a = bvn::gauss_copula(u, 1.0 - u, rho);
        diag.push((u, (cop.eval(u, u) - g_d) / w));
        anti.push((u, (cop.eval(u, 1.0 - u) - g_a) / w));
    }
    Ok((diag, anti))
}

/// Conditional sign-event probabilities from a lag copula.
///
/// `p_plus` and `p_minus` are the marginal probabilities of the upper and
/// lower threshold events; with C(u,v) the copula of (past, present):
/// p₊₊ = [2p₊ − 1 + C(1−p₊, 1−p₊)]/p₊, p₋₋ = C(p₋, p₋)/p₋,
/// p₋₊ = [p₋ − C(p₋, 1−p₊)]/p₋, p₊₋ = [p₋ − C(1−p₊, p₋)]/p₊.
pub fn conditional_event_probs(cop: &EmpiricalCopula, p_minus: f64, p_plus: f64) -> Result<ConditionalProbs> {
    for (name, p) in [("p_minus", p_minus), ("p_plus", p_plus)] {
        if !(0.0 < p && p < 1.0) {
            return Err(Error::invalid(name, "threshold probability must lie in (0, 1)"));
        }
    }
    let pp = (2.0 * p_plus - 1.0 + cop.eval(1.0 - p_plus, 1.0 - p_plus)) / p_plus;
    let mm = cop.eval(p_minus, p_minus) / p_minus;
    let mp = (p_minus - cop.eval(p_minus, 1.0 - p_plus)) / p_minus;
    let pm = (p_minus - cop.eval(1.0 - p_plus, p_minus)) / p_plus;
    Ok(ConditionalProbs { pp, mm, mp, pm })
}

/// Sample conditional means and medians of X_t given X_{t−ℓ} beyond the
/// q-quantile thresholds (upper set: past above the q-quantile; lower set:
/// past below the (1−q)-quantile).
pub fn conditional_expected_shortfall(x: &[f64], q: f64, lag: usize) -> Result<ConditionalShortfall> {
    if !(0.0 < q && q < 1.0) {
        return Err(Error::invalid("q", "quantile level must lie in (0, 1)"));
    }
    if lag == 0 || lag >= x.len() {
        return Err(Error::invalid("lag", "lag must satisfy 1 ≤ ℓ < T"));
    }
    let threshold_plus = sample_quantile(x, q);
    let threshold_minus = sample_quantile(x, 1.0 - q);
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for t in lag..x.len() {
        let past = x[t - lag];
        if past > threshold_plus {
            upper.push(x[t]);
        }
        if past < threshold_minus {
            lower.push(x[t]);
        }
    }
    if upper.is_empty() {
        return Err(Error::InsufficientData { what: "upper conditioning set".into(), need: 1, got: 0 });
    }
    if lower.is_empty() {
        return Err(Error::InsufficientData { what: "lower conditioning set".into(), need: 1, got: 0 });
    }
    Ok(ConditionalShortfall {
        mean_plus: mean(&upper),
        mean_minus: mean(&lower),
        median_plus: median(&mut upper.clone()),
        median_minus: median(&mut lower.clone()),
        count_plus: upper.len(),
        count_minus: lower.len(),
        threshold_plus,
        threshold_minus,
    })
}

/// Gaussian closed forms for the conditional means: with marginal quantile
/// level q and linear correlation ρ, ⟨X⟩± = ±ρ·φ(Φ⁻¹(q))/(1−q).
pub fn gaussian_conditional_es(rho: f64, q: f64) -> (f64, f64) {
    let p = 1.0 - q;
    let value = rho * norm_pdf(norm_ppf(q)) / p;
    (value, -value)
}

fn sample_quantile(x: &[f64], q: f64) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let k = ((q * x.len() as f64).ceil() as usize).clamp(1, x.len());
    sorted[k - 1]
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
