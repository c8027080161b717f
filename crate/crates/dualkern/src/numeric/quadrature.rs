//! Gauss-Hermite quadrature against the standard normal weight, and the
//! orthonormal (probabilists') Hermite polynomials.
//!
//! The polynomials `h_0, h_1, ...` are orthonormal under
//! `E_{X~N(0,1)}[h_m(X) h_n(X)] = δ_{mn}` and satisfy the three-term
//! recursion `h_{n+1}(x) = x h_n(x)/√(n+1) − √(n/(n+1)) h_{n−1}(x)` with
//! `h_0 = 1`, `h_1 = x`, and `h_n'(x) = √n h_{n−1}(x)`.

use super::NumericError;

/// Evaluate `h_0(x) .. h_n(x)` into `out` (`out.len() == n + 1`).
pub fn hermite_values_into(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = x;
    for k in 1..out.len() - 1 {
        let kf = k as f64;
        out[k + 1] = (x * out[k] - kf.sqrt() * out[k - 1]) / (kf + 1.0).sqrt();
    }
}

/// Evaluate `h_0(x) .. h_n(x)`.
pub fn hermite_values(x: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    hermite_values_into(x, &mut out);
    out
}

/// Evaluate the single polynomial `h_n(x)`.
pub fn hermite_value(x: f64, n: usize) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let kf = k as f64;
        let next = (x * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// Quadrature rule computing `E_{X~N(0,1)}[f(X)]` from point evaluations.
///
/// A rule with `n` nodes is exact for polynomials of degree `2n − 1`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// `(h_{n−1}(x), h_n(x))` up to a common positive scale factor. The rescaling
/// keeps the recursion inside f64 range at nodes far out in the Gaussian
/// tail; Newton steps only ever use the ratio, where the scale cancels.
fn scaled_hermite_pair(x: f64, n: usize) -> (f64, f64) {
    let (mut prev, mut cur) = (1.0f64, x);
    if n == 0 {
        return (0.0, 1.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = (x * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > 1e150 {
            prev *= 1e-150;
            cur *= 1e-150;
        }
    }
    (prev, cur)
}

/// `ln Σ_{k<n} h_k(x)²`, rescaling as needed.
fn christoffel_log_sum(x: f64, n: usize) -> f64 {
    let (mut prev, mut cur) = (1.0f64, x);
    let mut sum_sq = 1.0f64;
    let mut log_scale = 0.0f64;
    if n > 1 {
        sum_sq += cur * cur;
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        let next = (x * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
        prev = cur;
        cur = next;
        sum_sq += cur * cur;
        if cur.abs() > 1e150 {
            let f = 1e-150;
            prev *= f;
            cur *= f;
            sum_sq *= f * f;
            log_scale += 2.0 * 150.0 * std::f64::consts::LN_10;
        }
    }
    sum_sq.ln() + log_scale
}

/// Number of eigenvalues of the `n × n` Hermite Jacobi matrix (zero
/// diagonal, off-diagonal `√k`) strictly below `x`, via the Sturm/LDLᵀ
/// count. Monotone in `x`, so bisection on it never misses a root.
fn count_below(x: f64, n: usize) -> usize {
    let mut count = 0;
    let mut d = -x;
    if d < 0.0 {
        count += 1;
    }
    for k in 1..n {
        if d.abs() < 1e-300 {
            d = -1e-300;
        }
        d = -x - k as f64 / d;
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

impl GaussHermite {
    /// Build the `n`-node rule. Nodes are the roots of `h_n` (equivalently
    /// the Jacobi-matrix eigenvalues), isolated by Sturm bisection and
    /// polished by Newton; weights come from the Christoffel sums
    /// `1/Σ_{k<n} h_k(x_i)²`.
    pub fn new(n: usize) -> Result<Self, NumericError> {
        if n == 0 {
            return Err(NumericError::QuadratureSize);
        }
        let mut nodes = vec![0.0; n];
        let nf = n as f64;
        let bound = 2.0 * nf.sqrt() + 1.0;
        let half = n / 2;
        // Roots come in ± pairs; bisect only the upper half and mirror.
        for k in half..n {
            let (mut lo, mut hi) = (-bound, bound);
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                if count_below(mid, n) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-12 {
                    break;
                }
            }
            let mut x = 0.5 * (lo + hi);
            let mut converged = false;
            for _ in 0..50 {
                let (pm1, p) = scaled_hermite_pair(x, n);
                // h_n'(x) = √n h_{n−1}(x); the common scale cancels in the ratio.
                let dx = p / (nf.sqrt() * pm1);
                x -= dx;
                if dx.abs() <= 1e-15 * x.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(NumericError::QuadratureConvergence { node: k });
            }
            nodes[k] = x;
            nodes[n - 1 - k] = -x;
        }
        if n & 1 == 1 {
            nodes[half] = 0.0;
        }
        // Christoffel weights w_i = 1/Σ_{k<n} h_k(x_i)², computed in log
        // scale; weights of far-tail nodes may underflow to zero, which is
        // below any representable contribution to an expectation anyway.
        let weights = nodes
            .iter()
            .map(|&x| (-christoffel_log_sum(x, n)).exp())
            .collect();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E_{X~N(0,1)}[f(X)]`.
    pub fn expectation<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}
