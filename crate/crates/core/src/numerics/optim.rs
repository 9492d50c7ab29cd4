//! Root finding and small-scale optimisers: Brent's method, a
//! Nelder–Mead simplex with restarts, and projected gradient descent
//! with an adaptive step.

use crate::error::{Error, Result};

/// Brent root finder on a bracketing interval [a, b].
pub fn brent_root<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(Error::invalid(
            "bracket",
            format!("no sign change on [{a}, {b}]: f = ({fa}, {fb})"),
        ));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.abs() > fc.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * xm * s, 1.0 - s)
            } else {
                let q = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0)),
                    (q - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b);
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    Err(Error::NoConvergence {
        what: "Brent root finder".into(),
        iterations: max_iter,
    })
}

/// Expand a bracket [lo, hi] geometrically until `f` changes sign, then
/// run Brent. `f(lo)` fixes the reference sign.
pub fn brent_root_expanding<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64> {
    let flo = f(lo);
    let mut iter = 0;
    while f(hi) * flo > 0.0 {
        hi = lo + 2.0 * (hi - lo);
        iter += 1;
        if iter > 60 {
            return Err(Error::invalid(
                "bracket",
                format!("sign change not found expanding from [{lo}, {hi}]"),
            ));
        }
    }
    brent_root(f, lo, hi, tol, 200)
}

/// Result of a minimisation.
#[derive(Debug, Clone)]
pub struct MinResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Nelder–Mead simplex minimiser (adaptive coefficients).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    scale: f64,
    max_iter: usize,
    tol: f64,
) -> MinResult {
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    // initial simplex: x0 plus scaled unit steps
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if v[i].abs() > 1e-8 {
            0.1 * scale * v[i].abs()
        } else {
            0.1 * scale
        };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        // order
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
        let ordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let ordered_vals: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        simplex = ordered;
        values = ordered_vals;
        if (values[n] - values[0]).abs() <= tol * (1.0 + values[0].abs()) {
            break;
        }
        // centroid of all but worst
        let mut centroid = vec![0.0; n];
        for v in simplex.iter().take(n) {
            for (c, &vi) in centroid.iter_mut().zip(v) {
                *c += vi / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&worst)
            .map(|(&c, &w)| c + alpha * (c - w))
            .collect();
        let fr = f(&reflect);
        if fr < values[0] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&worst)
                .map(|(&c, &w)| c + gamma * (c - w))
                .collect();
            let fe = f(&expand);
            if fe < fr {
                simplex[n] = expand;
                values[n] = fe;
            } else {
                simplex[n] = reflect;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflect;
            values[n] = fr;
        } else {
            let contract: Vec<f64> = centroid
                .iter()
                .zip(&worst)
                .map(|(&c, &w)| c + rho * (w - c))
                .collect();
            let fc = f(&contract);
            if fc < values[n] {
                simplex[n] = contract;
                values[n] = fc;
            } else {
                // shrink toward best
                let best = simplex[0].clone();
                for v in simplex.iter_mut().skip(1) {
                    for (vi, &bi) in v.iter_mut().zip(&best) {
                        *vi = bi + sigma * (*vi - bi);
                    }
                }
                for (val, v) in values.iter_mut().zip(&simplex).skip(1) {
                    *val = f(v);
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    MinResult {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
    }
}

/// Options for [`projected_gradient`].
#[derive(Debug, Clone)]
pub struct PgOptions {
    pub max_iter: usize,
    pub initial_step: f64,
    pub tol: f64,
}

impl Default for PgOptions {
    fn default() -> Self {
        PgOptions {
            max_iter: 10_000,
            initial_step: 1e-3,
            tol: 1e-10,
        }
    }
}

/// Projected gradient descent with multiplicative step adaptation:
/// an accepted step grows the step size by 1.2, a rejected one halves
/// it. `project` maps a candidate back to the feasible set.
pub fn projected_gradient<F, G, P>(
    mut f: F,
    mut grad: G,
    mut project: P,
    x0: &[f64],
    opts: &PgOptions,
) -> MinResult
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
    P: FnMut(&mut [f64]),
{
    let mut x = x0.to_vec();
    project(&mut x);
    let mut value = f(&x);
    let mut step = opts.initial_step;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let g = grad(&x);
        let mut cand: Vec<f64> = x.iter().zip(&g).map(|(&xi, &gi)| xi - step * gi).collect();
        project(&mut cand);
        let cand_value = f(&cand);
        if cand_value < value {
            let improvement = value - cand_value;
            x = cand;
            value = cand_value;
            step *= 1.2;
            if improvement <= opts.tol * (1.0 + value.abs()) {
                break;
            }
        } else {
            step *= 0.5;
            if step < 1e-15 {
                break;
            }
        }
    }
    MinResult {
        x,
        value,
        iterations,
    }
}
