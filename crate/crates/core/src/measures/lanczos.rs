//! Leading eigenpairs of a symmetric operator by Lanczos iteration with full
//! reorthogonalization.

use crate::error::{Error, Result};
use crate::measures::eigen::dense_eigenpairs;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn start_vector(n: usize) -> Vec<f64> {
    // Deterministic and free of structure that could hide a mode.
    let mut s: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            1.0 + 0.5 * ((s >> 11) as f64 / (1u64 << 53) as f64)
        })
        .collect();
    let nrm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    v
}

/// The `k` largest eigenvalues (descending) and unit eigenvectors of the
/// n×n symmetric operator `matvec`. Ritz pairs are accepted once their
/// residual is below `tol` times the largest Ritz value.
pub fn top_eigenpairs<F>(n: usize, matvec: F, k: usize, tol: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let k = k.min(n);
    if k == 0 {
        return Ok((vec![], vec![]));
    }
    let mut m = (2 * k + 20).max(40).min(n);
    loop {
        let mut basis: Vec<Vec<f64>> = vec![start_vector(n)];
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        let mut w = vec![0.0; n];
        let mut last_beta = 0.0;
        for j in 0..m {
            matvec(&basis[j], &mut w);
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            // Two passes of classical Gram–Schmidt against the whole basis.
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(&w, v);
                    w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = dot(&w, &w).sqrt();
            last_beta = b;
            if j + 1 == m || b <= 1e-14 * alpha[0].abs().max(f64::MIN_POSITIVE) {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let mm = alpha.len();
        let mut t = vec![0.0; mm * mm];
        for i in 0..mm {
            t[i * mm + i] = alpha[i];
            if i + 1 < mm {
                t[i * mm + i + 1] = beta[i];
                t[(i + 1) * mm + i] = beta[i];
            }
        }
        let (vals, vecs) = dense_eigenpairs(&t, mm)?;
        let kk = k.min(mm);
        let scale = vals[0].abs().max(f64::MIN_POSITIVE);
        let exhausted = mm < m || mm == n;
        let converged = (0..kk).all(|i| (last_beta * vecs[i][mm - 1]).abs() <= tol * scale);
        if converged || exhausted {
            if kk < k && !exhausted {
                return Err(Error::Convergence("Lanczos basis smaller than requested mode count".into()));
            }
            let out: Vec<Vec<f64>> = (0..kk)
                .map(|i| {
                    let mut y = vec![0.0; n];
                    for (c, v) in vecs[i].iter().zip(&basis) {
                        y.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
                    }
                    let nrm = dot(&y, &y).sqrt();
                    y.iter_mut().for_each(|a| *a /= nrm);
                    y
                })
                .collect();
            return Ok((vals[..kk].to_vec(), out));
        }
        if m == n {
            return Err(Error::Convergence("Lanczos did not converge with a full basis".into()));
        }
        m = (2 * m).min(n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_operator() {
        let d: Vec<f64> = (0..300).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let (vals, vecs) = top_eigenpairs(300, |x, y| y.iter_mut().zip(x).zip(&d).for_each(|((y, x), d)| *y = d * x), 5, 1e-12).unwrap();
        for i in 0..5 {
            assert!((vals[i] - d[i]).abs() < 1e-12);
            assert!((vecs[i][i].abs() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn matches_dense_on_gaussian_kernel() {
        let n = 200;
        let a: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = ((k / n) as f64, (k % n) as f64);
                (-(i - j).powi(2) / 50.0).exp() * (-(i / 80.0)).exp() * (-(j / 80.0)).exp()
            })
            .collect();
        let (want, wv) = dense_eigenpairs(&a, n).unwrap();
        let mv = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            }
        };
        let (vals, vecs) = top_eigenpairs(n, mv, 6, 1e-12).unwrap();
        for i in 0..6 {
            assert!((vals[i] - want[i]).abs() < 1e-10 * want[0]);
            let ov: f64 = vecs[i].iter().zip(&wv[i]).map(|(x, y)| x * y).sum();
            assert!((ov.abs() - 1.0).abs() < 1e-8, "mode {i}: {ov}");
        }
    }
}
