//! Dense symmetric linear algebra: Cholesky solves and Jacobi eigenvalues.
//!
//! Matrices are row-major `Vec<f64>` slabs with an explicit dimension; sizes
//! in this crate stay in the hundreds, where these direct methods are both
//! accurate and fast enough.

use super::NumericError;

/// Solve `A x = b` for symmetric positive definite `A` (row-major, `n × n`)
/// via Cholesky factorization. `A` is consumed as scratch.
pub fn cholesky_solve(mut a: Vec<f64>, n: usize, b: &[f64]) -> Result<Vec<f64>, NumericError> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    // In-place lower factor.
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d.is_finite() && d > 0.0) {
            return Err(NumericError::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    // Forward then backward substitution.
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= a[i * n + k] * x[k];
        }
        x[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= a[k * n + i] * x[k];
        }
        x[i] = s / a[i * n + i];
    }
    Ok(x)
}

/// Eigenvalues of a symmetric matrix (row-major, `n × n`) by the cyclic
/// Jacobi method, returned in ascending order.
pub fn symmetric_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    if n == 1 {
        return vec![a[0]];
    }
    let max_sweeps = 50;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() < 1e-14 * frobenius(&a, n).max(1e-300) {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Apply the rotation on both sides.
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

fn frobenius(a: &[f64], n: usize) -> f64 {
    a[..n * n].iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: Vec<f64>, n: usize) -> f64 {
    symmetric_eigenvalues(a, n)[0]
}
