//! Quadrature: Gauss–Legendre and Gauss–Hermite rules generated by the
//! Golub–Welsch eigenvalue method, and an adaptive Gauss–Kronrod
//! integrator.

use nalgebra::DMatrix;

/// A fixed quadrature rule: nodes and weights.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Nodes and weights from the symmetric tridiagonal Jacobi matrix with
/// the given off-diagonal, scaled so the weights sum to `total_mass`.
fn golub_welsch(off_diag: &[f64], total_mass: f64) -> QuadRule {
    let n = off_diag.len() + 1;
    let mut j = DMatrix::<f64>::zeros(n, n);
    for (k, &b) in off_diag.iter().enumerate() {
        j[(k, k + 1)] = b;
        j[(k + 1, k)] = b;
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], total_mass * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    QuadRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss–Legendre rule of order `n` on [-1, 1].
pub fn gauss_legendre(n: usize) -> QuadRule {
    assert!(n >= 1);
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let kf = k as f64;
            kf / (4.0 * kf * kf - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&off, 2.0)
}

/// Gauss–Hermite rule of order `n` for the weight `exp(-x^2)`.
pub fn gauss_hermite(n: usize) -> QuadRule {
    assert!(n >= 1);
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    golub_welsch(&off, std::f64::consts::PI.sqrt())
}

impl QuadRule {
    /// Integrate `f` over [a, b] after affine rescaling of a [-1, 1]
    /// rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Expectation of `f` under the standard normal law, using a
    /// Gauss–Hermite rule (`E[f(W)] = pi^{-1/2} sum w_i f(sqrt(2) x_i)`).
    pub fn gauss_expectation<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(std::f64::consts::SQRT_2 * x))
            .sum::<f64>()
            * inv_sqrt_pi
    }
}

const GK_NODES: [f64; 8] = [
    0.000000000000000,
    0.207784955007898,
    0.405845151377397,
    0.586087235467691,
    0.741531185599394,
    0.864864423359769,
    0.949107912342759,
    0.991455371120813,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.209482141084728,
    0.204432940075298,
    0.190350578064785,
    0.169004726639267,
    0.140653259715525,
    0.104790010322250,
    0.063092092629979,
    0.022935322010529,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.417959183673469,
    0.381830050505119,
    0.279705391489277,
    0.129484966168870,
];

/// One Gauss7/Kronrod15 panel: returns (kronrod, |kronrod - gauss|).
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut fk = [0.0_f64; 15];
    fk[7] = f(mid);
    for i in 1..8 {
        let dx = half * GK_NODES[i];
        fk[7 - i] = f(mid - dx);
        fk[7 + i] = f(mid + dx);
    }
    let mut kron = GK_WEIGHTS_K[0] * fk[7];
    for i in 1..8 {
        kron += GK_WEIGHTS_K[i] * (fk[7 - i] + fk[7 + i]);
    }
    // Gauss-7 uses the odd Kronrod nodes (indices 1, 3, 5 plus centre).
    let mut gauss = GK_WEIGHTS_G[0] * fk[7];
    for i in 1..4 {
        gauss += GK_WEIGHTS_G[i] * (fk[7 - 2 * i] + fk[7 + 2 * i]);
    }
    (kron * half, (kron - gauss).abs() * half)
}

/// Adaptive Gauss–Kronrod integration of `f` over [a, b].
///
/// Bisects the worst panel until the summed error estimate satisfies
/// the absolute/relative tolerance or the panel budget is exhausted.
pub fn adaptive_gk<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    adaptive_gk_with_err(f, a, b, tol).0
}

/// As [`adaptive_gk`], also returning the final summed error estimate so
/// callers can detect a failure to converge within the panel budget.
pub fn adaptive_gk_with_err<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    #[derive(Debug)]
    struct Panel {
        a: f64,
        b: f64,
        value: f64,
        error: f64,
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut panels = vec![Panel {
        a,
        b,
        value: v,
        error: e,
    }];
    for _ in 0..2000 {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.error).sum();
        if err <= tol.max(1e-16 * total.abs()) {
            break;
        }
        // split the panel with the largest error estimate
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let Panel { a, b, .. } = panels.swap_remove(worst);
        let mid = 0.5 * (a + b);
        let (v1, e1) = gk15(&mut f, a, mid);
        let (v2, e2) = gk15(&mut f, mid, b);
        panels.push(Panel {
            a,
            b: mid,
            value: v1,
            error: e1,
        });
        panels.push(Panel {
            a: mid,
            b,
            value: v2,
            error: e2,
        });
    }
    let value = panels.iter().map(|p| p.value).sum();
    let err = panels.iter().map(|p| p.error).sum();
    (value, err)
}
