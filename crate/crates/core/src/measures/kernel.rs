//! The atom reduced density in the time domain.
//!
//! With B(q, k) = G(q) ∫₀^∞ f(t) e^{i(q+k)t} dt, tracing out the photon
//! gives ρ(q, q') = 2π G(q)G(q') ∫₀^∞ |f(t)|² e^{i(q−q')t} dt. Its nonzero
//! spectrum equals that of the real symmetric operator
//! S(t, t') = |f(t)| |f(t')| g(t − t'), with g(τ) = ∫G(q)² e^{iqτ} dq ∝
//! exp(−η²τ²/8). A Nyström discretization of S on a graded t grid couples
//! each node only to nodes within the Gaussian's reach, so S is applied in
//! O(n·reach) and Tr S² needs no eigendecomposition.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::eigen::{dense_eigenpairs, dense_eigenvalues};
use crate::measures::lanczos::top_eigenpairs;
use crate::quad::gauss_panels;
use crate::wavefunction::SteadyState;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KernelOptions {
    /// Mean coarse node spacing in units of 1/η.
    pub h_factor: f64,
    /// Mean node spacing while the fast pole is still alive.
    pub fine_step: f64,
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
    /// The fine region lasts this many fast decay times.
    pub fine_decay: f64,
    /// Relative |f|² mass allowed beyond the last node.
    pub tail_cut: f64,
    /// g(τ) below this is treated as zero.
    pub gauss_cut: f64,
    /// Up to this many nodes the eigenproblem is solved densely and the
    /// full spectrum is available. Larger kernels give their leading modes
    /// by Lanczos; K still comes exactly from Tr S².
    pub dense_limit: usize,
    pub max_nodes: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            h_factor: 1.0,
            fine_step: 0.1,
            order: 16,
            fine_decay: 12.0,
            tail_cut: 1e-10,
            gauss_cut: 1e-18,
            dense_limit: 2000,
            max_nodes: 4_000_000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelInfo {
    pub nodes: usize,
    pub fine_nodes: usize,
    /// Widest coupling of any node, in nodes.
    pub bandwidth: usize,
    pub t_max: f64,
    pub coarse_step: f64,
    pub tail_mass: f64,
}

#[derive(Clone, Debug)]
pub struct TimeKernel {
    pub eta: f64,
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    /// √w |f| normalized so that ∑ d² = 1 (unit trace).
    d: Vec<f64>,
    /// f / |f| at the nodes.
    pub phase: Vec<C64>,
    /// First coupled index of each row.
    lo: Vec<usize>,
    inv_width: f64,
    gauss_cut: f64,
    pub info: KernelInfo,
    opts: KernelOptions,
}

impl TimeKernel {
    pub fn build(s: &SteadyState, opts: &KernelOptions) -> Result<Self> {
        let eta = s.eta;
        let a_min = s.narrow_width();
        let a_max = s.broad_width();
        if !(a_min > 0.0) {
            return Err(Error::domain("delta", "the narrow pole does not decay"));
        }
        let total = s.time_tail(0.0);
        // Bisection for the node range: tail(T) ≤ cut · tail(0).
        let mut hi = (1.0 / opts.tail_cut).ln() / (2.0 * a_min) + 50.0;
        while s.time_tail(hi) > opts.tail_cut * total {
            hi *= 2.0;
        }
        let mut lo_t = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo_t + hi);
            if s.time_tail(mid) > opts.tail_cut * total {
                lo_t = mid;
            } else {
                hi = mid;
            }
        }
        let t_max = hi;
        let h_c = (opts.h_factor / eta).min(0.05 / a_min);
        let h_f = opts.fine_step.min(h_c);
        let t_f = if h_f < h_c { (opts.fine_decay / a_max).min(t_max) } else { 0.0 };

        // Composite Gauss–Legendre panels: f and g are smooth on [0, T], so the
        // Nyström eigenvalues converge spectrally in the node density.
        let p = opts.order;
        let m_f = if t_f > 0.0 { (t_f / (p as f64 * h_f)).ceil() as usize } else { 0 };
        let m_c = ((t_max - t_f) / (p as f64 * h_c)).ceil().max(1.0) as usize;
        let n_f = m_f * p;
        if (m_f + m_c) * p > opts.max_nodes {
            return Err(Error::Unsupported(format!(
                "time kernel would need {} nodes (limit {})",
                (m_f + m_c) * p,
                opts.max_nodes
            )));
        }
        let (mut t, mut w) = if m_f > 0 { gauss_panels(0.0, t_f, m_f, p) } else { (Vec::new(), Vec::new()) };
        let (tc, wc) = gauss_panels(t_f, t_max, m_c, p);
        t.extend(tc);
        w.extend(wc);
        let f: Vec<C64> = t.iter().map(|&x| s.time_amplitude(x)).collect();
        let mass: f64 = f.iter().zip(&w).map(|(f, w)| w * f.norm_sqr()).sum();
        let d: Vec<f64> = f.iter().zip(&w).map(|(f, w)| (w * f.norm_sqr() / mass).sqrt()).collect();
        let phase = f.iter().map(|f| if f.norm() > 0.0 { f / f.norm() } else { C64::new(1.0, 0.0) }).collect();

        let tau_max = (8.0 * (1.0 / opts.gauss_cut).ln()).sqrt() / eta;
        let n = t.len();
        let mut lo = vec![0; n];
        let mut p = 0;
        for i in 0..n {
            while t[i] - t[p] > tau_max {
                p += 1;
            }
            lo[i] = p;
        }
        let bandwidth = (0..n).map(|i| i - lo[i]).max().unwrap_or(0);
        let info = KernelInfo {
            nodes: n,
            fine_nodes: n_f,
            bandwidth,
            t_max,
            coarse_step: h_c,
            tail_mass: s.time_tail(t_max) / total,
        };
        Ok(TimeKernel { eta, t, w, d, phase, lo, inv_width: eta * eta / 8.0, gauss_cut: opts.gauss_cut, info, opts: *opts })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    #[inline]
    fn g(&self, tau: f64) -> f64 {
        let v = (-self.inv_width * tau * tau).exp();
        if v < self.gauss_cut { 0.0 } else { v }
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.d[i] * self.d[j] * self.g(self.t[i] - self.t[j])
    }

    /// Tr S² = ∑ λ², computed directly from the entries.
    pub fn purity(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.len() {
            let di = self.d[i];
            s += di.powi(4);
            for j in self.lo[i]..i {
                let e = self.entry(i, j);
                s += 2.0 * e * e;
            }
        }
        s
    }

    pub fn schmidt_number(&self) -> f64 {
        1.0 / self.purity()
    }

    pub fn trace(&self) -> f64 {
        self.d.iter().map(|x| x * x).sum()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.len() {
            let mut acc = self.d[i] * self.d[i] * x[i];
            for j in self.lo[i]..i {
                let e = self.entry(i, j);
                acc += e * x[j];
                y[j] += e * x[i];
            }
            y[i] += acc;
        }
    }

    fn use_dense(&self) -> bool {
        self.len() <= self.opts.dense_limit
    }

    fn dense(&self) -> Vec<f64> {
        let n = self.len();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in self.lo[i]..=i {
                let e = self.entry(i, j);
                a[i * n + j] = e;
                a[j * n + i] = e;
            }
        }
        a
    }

    /// Whether the full spectrum is affordable.
    pub fn full_spectrum_available(&self) -> bool {
        self.use_dense()
    }

    /// Every eigenvalue, descending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.use_dense() {
            return Err(Error::Unsupported(format!(
                "full spectrum of a {}-node kernel exceeds dense_limit {}",
                self.len(),
                self.opts.dense_limit
            )));
        }
        dense_eigenvalues(&self.dense(), self.len())
    }

    /// The `k` leading eigenpairs; eigenvectors are unit vectors on the nodes.
    pub fn top_modes(&self, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let n = self.len();
        if self.use_dense() {
            let (vals, vecs) = dense_eigenpairs(&self.dense(), n)?;
            let k = k.min(n);
            Ok((vals[..k].to_vec(), vecs.into_iter().take(k).collect()))
        } else {
            top_eigenpairs(n, |x, y| self.matvec(x, y), k, 1e-10)
        }
    }

    /// Atom Schmidt mode ψ(q) = G(q) Σ d_i y_i e^{iqt_i} / √(η√(π/2)·λ),
    /// unit normalized over the real q line.
    pub fn atom_mode(&self, lambda: f64, y: &[f64], q: &[f64]) -> Vec<C64> {
        let c = 1.0 / (self.eta * (std::f64::consts::PI / 2.0).sqrt() * lambda).sqrt();
        q.iter()
            .map(|&qq| {
                let g = (-(qq / self.eta).powi(2)).exp();
                let s: C64 = self.t.iter().zip(&self.d).zip(y).map(|((t, d), y)| d * y * C64::from_polar(1.0, qq * t)).sum();
                s * (g * c)
            })
            .collect()
    }

    /// ⟨ψ_m, ψ_n⟩ over the whole q line for modes built by [`Self::atom_mode`].
    pub fn mode_overlap(&self, lm: f64, ym: &[f64], ln: f64, yn: &[f64]) -> f64 {
        let mut yn_s = vec![0.0; self.len()];
        self.matvec(yn, &mut yn_s);
        ym.iter().zip(&yn_s).map(|(a, b)| a * b).sum::<f64>() / (lm * ln).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{coherence_from_r_theta, derived_coefficients, ModelParams};
    use crate::quad::{integrate, QuadOptions};
    use std::f64::consts::PI;
    use crate::wavefunction::trapezoid_weights;

    fn state(delta: f64, eta: f64, r: f64, theta: f64) -> SteadyState {
        let m = ModelParams::new(delta, eta).unwrap();
        let c = coherence_from_r_theta(r, theta).unwrap();
        SteadyState::exact(&m, &derived_coefficients(&m, &c).unwrap())
    }

    /// Independent purity in q space: Tr ρ² = ∫|H(τ)|² C(τ) dτ / (Tr ρ)²
    /// with C(τ) = ∫G²(q)G²(q−τ)dq = (η√π/2) e^{−τ²/η²}.
    fn oracle_k(s: &SteadyState) -> f64 {
        let eta = s.eta;
        let w = 2.0 * s.narrow_width();
        let mut pts = vec![0.0, w, 10.0 * w, 100.0 * w, 7.0 * eta];
        pts.retain(|&x| x <= 7.0 * eta);
        let num = 2.0
            * integrate(|tau| s.autocorrelation(tau).norm_sqr() * (eta * PI.sqrt() / 2.0) * (-(tau / eta).powi(2)).exp(), &pts, QuadOptions { rel_tol: 1e-11, ..Default::default() })
                .unwrap();
        let tr = s.autocorrelation(0.0).re * eta * (PI / 2.0).sqrt();
        tr * tr / num
    }

    #[test]
    fn unit_trace() {
        let k = TimeKernel::build(&state(0.1, 0.5, 0.0, PI), &KernelOptions::default()).unwrap();
        assert!((k.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn purity_matches_q_space_oracle() {
        for (delta, eta, r, theta) in [(0.1, 0.5, 0.0, PI), (0.2, 0.3, 0.5, 2.0), (0.3, 1.0, -0.4, PI), (0.1, 0.1, 0.0, 0.0), (0.05, 2.0, 0.0, PI)] {
            let s = state(delta, eta, r, theta);
            let k = TimeKernel::build(&s, &KernelOptions::default()).unwrap();
            let want = oracle_k(&s);
            let got = k.schmidt_number();
            assert!((got - want).abs() < 1e-6 * want, "δ={delta} η={eta}: {got} vs {want}");
        }
    }

    #[test]
    fn refinement_is_stable() {
        let s = state(0.1, 0.5, 0.3, 2.5);
        let base = TimeKernel::build(&s, &KernelOptions::default()).unwrap().schmidt_number();
        let fine = TimeKernel::build(&s, &KernelOptions { h_factor: 0.5, fine_step: 0.05, tail_cut: 1e-14, ..Default::default() })
            .unwrap()
            .schmidt_number();
        assert!((base - fine).abs() < 1e-7 * fine, "{base} {fine}");
    }

    #[test]
    fn spectrum_matches_trace_and_purity() {
        let s = state(0.3, 0.5, 0.0, PI);
        let k = TimeKernel::build(&s, &KernelOptions::default()).unwrap();
        assert!(k.full_spectrum_available(), "{:?}", k.info);
        let ev = k.eigenvalues().unwrap();
        let sum: f64 = ev.iter().sum();
        let sq: f64 = ev.iter().map(|x| x * x).sum();
        assert!((sum - 1.0).abs() < 1e-10);
        assert!((sq - k.purity()).abs() < 1e-10 * sq);
        assert!(ev.windows(2).all(|w| w[0] >= w[1]));
        let small = TimeKernel::build(&s, &KernelOptions { dense_limit: 10, ..Default::default() }).unwrap();
        assert!(matches!(small.eigenvalues(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn modes_are_orthonormal_on_the_q_line() {
        let s = state(0.2, 0.5, 0.0, PI);
        let k = TimeKernel::build(&s, &KernelOptions { dense_limit: 50, ..Default::default() }).unwrap();
        let (vals, vecs) = k.top_modes(6).unwrap();
        for m in 0..6 {
            for n in 0..6 {
                let o = k.mode_overlap(vals[m], &vecs[m], vals[n], &vecs[n]);
                let want = if m == n { 1.0 } else { 0.0 };
                assert!((o - want).abs() < 1e-8, "{m},{n}: {o}");
            }
        }
        // Sampled on a q grid much finer than the narrow width, the modes
        // keep their norm under plain quadrature too.
        let a = s.narrow_width();
        let n = (10.0 * 0.5 / (0.3 * a)) as usize;
        let q: Vec<f64> = (0..=n).map(|i| -5.0 * 0.5 + 10.0 * 0.5 * i as f64 / n as f64).collect();
        let wq = trapezoid_weights(&q);
        let psi = k.atom_mode(vals[0], &vecs[0], &q);
        let nrm: f64 = psi.iter().zip(&wq).map(|(p, w)| w * p.norm_sqr()).sum();
        assert!((nrm - 1.0).abs() < 1e-6, "{nrm}");
    }

    #[test]
    fn lanczos_modes_match_dense() {
        let s = state(0.1, 0.5, 0.0, PI);
        let dense = TimeKernel::build(&s, &KernelOptions { dense_limit: 100_000, ..Default::default() }).unwrap();
        let sparse = TimeKernel::build(&s, &KernelOptions { dense_limit: 10, ..Default::default() }).unwrap();
        let (v1, _) = dense.top_modes(8).unwrap();
        let (v2, _) = sparse.top_modes(8).unwrap();
        for (a, b) in v1.iter().zip(&v2) {
            assert!((a - b).abs() < 1e-10 * v1[0]);
        }
    }
}
