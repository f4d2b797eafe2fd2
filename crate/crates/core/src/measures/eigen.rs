//! Dense symmetric eigensolvers (faer) used by the kernel and by Lanczos.

use crate::error::{Error, Result};

/// Symmetric eigenvalues (descending) of a dense row-major matrix via faer.
pub fn dense_eigenvalues(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a[i * n + j]);
    let mut ev = m
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Convergence(format!("dense eigensolver: {e:?}")))?;
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// Eigenpairs (descending) of a dense symmetric matrix via faer; vectors are
/// returned as columns in the same order.
pub fn dense_eigenpairs(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a[i * n + j]);
    let evd = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Convergence(format!("dense eigensolver: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let vals = order.iter().map(|&i| s[i]).collect();
    let vecs = order.iter().map(|&k| (0..n).map(|i| u[(i, k)]).collect()).collect();
    Ok((vals, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_spectrum() {
        // Discrete Laplacian: eigenvalues 2 − 2cos(kπ/(n+1)), descending.
        let n = 40;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 2.0;
            if i + 1 < n {
                a[i * n + i + 1] = -1.0;
                a[(i + 1) * n + i] = -1.0;
            }
        }
        let ev = dense_eigenvalues(&a, n).unwrap();
        let (vals, vecs) = dense_eigenpairs(&a, n).unwrap();
        for (k, v) in ev.iter().enumerate() {
            let kk = (n - k) as f64;
            let want = 2.0 - 2.0 * (kk * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((v - want).abs() < 1e-13);
            assert!((vals[k] - want).abs() < 1e-13);
        }
        // A v = λ v for the leading pair.
        for i in 0..n {
            let av: f64 = (0..n).map(|j| a[i * n + j] * vecs[0][j]).sum();
            assert!((av - vals[0] * vecs[0][i]).abs() < 1e-12);
        }
    }
}
