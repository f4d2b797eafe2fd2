//! Steady-state atom–photon amplitudes on momentum grids.

mod state;

use std::io::Write;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

pub use state::{PoleTerm, SteadyState};

use crate::error::{Error, Result};
use crate::fmt::num;
use crate::model::{DerivedCoefficients, ModelParams};

/// Exact steady-state amplitude B(Δq, Δk), unnormalized.
pub fn evaluate_amplitude(m: &ModelParams, d: &DerivedCoefficients, dq: f64, dk: f64) -> C64 {
    let iu = C64::new(0.0, dq + dk);
    let s = d.amp1 / (iu + d.pole1) + d.amp2 / (iu + d.pole2);
    C64::new(s.im, -s.re) * (-(dq / m.eta).powi(2)).exp()
}

/// Single-pole dark-state form e^{−(dq/η)²}/(i(dq+dk) − δ²/4).
pub fn evaluate_dark_approx(dq: f64, dk: f64, eta: f64, delta: f64) -> C64 {
    (-(dq / eta).powi(2)).exp() / C64::new(-0.25 * delta * delta, dq + dk)
}

/// Trapezoid weights for strictly increasing nodes.
pub fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = 0.5 * (x[i + 1] - x[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

pub fn uniform_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Sample points of Δq and Δk with quadrature weights.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentumGrid {
    pub q_nodes: Vec<f64>,
    pub q_weights: Vec<f64>,
    pub k_nodes: Vec<f64>,
    pub k_weights: Vec<f64>,
    /// Explicit photon detection point; `None` selects the photon-marginal peak.
    pub dk0: Option<f64>,
}

/// Controls for [`MomentumGrid::for_state`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    /// Uniform q nodes; `None` sizes the axis to resolve the narrow line.
    pub q_points: Option<usize>,
    /// Nodes of the coarse uniform k axis.
    pub k_points: usize,
    /// q covers [−f·η, f·η].
    pub q_span_factor: f64,
    /// Coarse k axis covers [−k_span, k_span].
    pub k_span: f64,
    /// Nodes per 40 narrow half-widths in the fine band.
    pub fine_window_points: usize,
    pub max_q_points: usize,
    pub max_k_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            q_points: None,
            k_points: 801,
            q_span_factor: 5.0,
            k_span: 40.0,
            fine_window_points: 64,
            max_q_points: 2049,
            max_k_points: 8193,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_span_factor >= 4.0) {
            return Err(Error::domain("q_span_factor", "q span must cover at least [-4 eta, 4 eta]"));
        }
        if !(self.k_span >= 20.0) {
            return Err(Error::domain("k_span", "k_span must be >= 20"));
        }
        if self.k_points < 16 {
            return Err(Error::domain("k_points", "k axis needs at least 16 coarse nodes"));
        }
        if self.fine_window_points < 8 {
            return Err(Error::domain("fine_window_points", "the fine window needs at least 8 nodes"));
        }
        if matches!(self.q_points, Some(n) if n < 16) {
            return Err(Error::domain("q_points", "q axis needs at least 16 nodes"));
        }
        Ok(())
    }
}

impl MomentumGrid {
    pub fn new(q_nodes: Vec<f64>, k_nodes: Vec<f64>) -> Result<Self> {
        let q_weights = trapezoid_weights(&q_nodes);
        let k_weights = trapezoid_weights(&k_nodes);
        let g = MomentumGrid { q_nodes, q_weights, k_nodes, k_weights, dk0: None };
        g.check_nodes()?;
        Ok(g)
    }

    /// Uniform grid over [−qf·η, qf·η] × [−k_span, k_span].
    pub fn uniform(eta: f64, q_span_factor: f64, nq: usize, k_span: f64, nk: usize) -> Result<Self> {
        if nq < 2 || nk < 2 {
            return Err(Error::domain("grid", "both axes need at least 16 nodes"));
        }
        let g = Self::new(uniform_nodes(-q_span_factor * eta, q_span_factor * eta, nq), uniform_nodes(-k_span, k_span, nk))?;
        g.validate(eta)?;
        Ok(g)
    }

    /// Grid adapted to a state: uniform q, and a k axis that joins a coarse
    /// uniform grid with a fine band following the narrow line across the
    /// whole q range (the line sits at Δk = u_c − Δq).
    pub fn for_state(s: &SteadyState, spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        let a = s.narrow_width();
        let c = s.narrow_center();
        let qmax = spec.q_span_factor * s.eta;
        let h_fine = 40.0 * a / spec.fine_window_points as f64;
        let nq = match spec.q_points {
            Some(n) => n,
            None => (((2.0 * qmax / h_fine).ceil() as usize) + 1).clamp(65, spec.max_q_points.max(65)),
        };
        if nq < 16 {
            return Err(Error::domain("q_points", "q axis needs at least 16 nodes"));
        }
        let q_nodes = uniform_nodes(-qmax, qmax, nq);

        let coarse = uniform_nodes(-spec.k_span, spec.k_span, spec.k_points);
        let lo = (c - qmax - 20.0 * a).max(-spec.k_span);
        let hi = (c + qmax + 20.0 * a).min(spec.k_span);
        let budget = spec.max_k_points.saturating_sub(spec.k_points).max(16);
        let nb = (((hi - lo) / h_fine).ceil() as usize + 1).clamp(2, budget);
        let band = uniform_nodes(lo, hi, nb);
        let mut k_nodes: Vec<f64> = coarse.into_iter().filter(|&k| k < lo || k > hi).chain(band).collect();
        k_nodes.sort_by(f64::total_cmp);
        k_nodes.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + y.abs()));

        let g = Self::new(q_nodes, k_nodes)?;
        g.validate(s.eta)?;
        Ok(g)
    }

    pub fn check_nodes(&self) -> Result<()> {
        for (name, x, w) in [("q", &self.q_nodes, &self.q_weights), ("k", &self.k_nodes, &self.k_weights)] {
            if x.len() < 16 {
                return Err(Error::domain("grid", format!("{name} axis has {} nodes; need at least 16", x.len())));
            }
            if x.windows(2).any(|p| !(p[1] > p[0])) || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("grid", format!("{name} nodes must be finite and strictly increasing")));
            }
            if w.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::domain("grid", format!("{name} weights must be positive")));
            }
        }
        Ok(())
    }

    /// Span requirements: q ⊇ [−4η, 4η] and k ⊇ [−20, 20].
    pub fn validate(&self, eta: f64) -> Result<()> {
        self.check_nodes()?;
        let (q0, q1) = (self.q_nodes[0], *self.q_nodes.last().unwrap());
        if q0 > -4.0 * eta * (1.0 - 1e-12) || q1 < 4.0 * eta * (1.0 - 1e-12) {
            return Err(Error::domain("q_span_factor", format!("q span [{q0}, {q1}] must cover [-4 eta, 4 eta]")));
        }
        let (k0, k1) = (self.k_nodes[0], *self.k_nodes.last().unwrap());
        if k0 > -20.0 || k1 < 20.0 {
            return Err(Error::domain("k_span", format!("k span [{k0}, {k1}] must cover [-20, 20]")));
        }
        Ok(())
    }

    pub fn nq(&self) -> usize {
        self.q_nodes.len()
    }

    pub fn nk(&self) -> usize {
        self.k_nodes.len()
    }

    /// Largest spacing on each axis.
    pub fn max_spacing(&self) -> (f64, f64) {
        let m = |x: &[f64]| x.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
        (m(&self.q_nodes), m(&self.k_nodes))
    }

    /// True when both axes resolve a Lorentzian of half-width `a` along the
    /// band where it lives (spacing at most one half-width).
    pub fn resolves(&self, s: &SteadyState) -> bool {
        let a = s.narrow_width();
        let c = s.narrow_center();
        let (hq, _) = self.max_spacing();
        let q0 = self.q_nodes[0];
        let q1 = *self.q_nodes.last().unwrap();
        let hk = self
            .k_nodes
            .windows(2)
            .filter(|p| p[1] >= c - q1 - 5.0 * a && p[0] <= c - q0 + 5.0 * a)
            .map(|p| p[1] - p[0])
            .fold(0.0, f64::max);
        hq <= a && hk <= a
    }

    /// Same nodes with the axes exchanged.
    pub fn transposed(&self) -> MomentumGrid {
        MomentumGrid {
            q_nodes: self.k_nodes.clone(),
            q_weights: self.k_weights.clone(),
            k_nodes: self.q_nodes.clone(),
            k_weights: self.q_weights.clone(),
            dk0: None,
        }
    }
}

/// Complex amplitudes on a grid, row-major in q (index = iq·nk + ik).
#[derive(Clone, Debug)]
pub struct WavefunctionGrid {
    pub grid: MomentumGrid,
    pub values: Vec<C64>,
    /// ∑∑ w_q w_k |B|² of the stored values.
    pub norm_check: f64,
    /// Normalization constant already applied to `values`.
    pub chi0: C64,
    /// The analytic state the values were sampled from, when there is one.
    pub source: Option<SteadyState>,
}

impl WavefunctionGrid {
    /// Raw (unnormalized) samples of an analytic state.
    pub fn sample(s: &SteadyState, grid: &MomentumGrid) -> Self {
        let nk = grid.nk();
        let mut values = vec![C64::new(0.0, 0.0); grid.nq() * nk];
        values.par_chunks_mut(nk).zip(grid.q_nodes.par_iter()).for_each(|(row, &q)| {
            let g = s.gaussian(q);
            for (v, &k) in row.iter_mut().zip(&grid.k_nodes) {
                *v = s.bracket(q + k) * g;
            }
        });
        let mut w = WavefunctionGrid { grid: grid.clone(), values, norm_check: 0.0, chi0: C64::new(1.0, 0.0), source: Some(s.clone()) };
        w.norm_check = w.weighted_norm_sqr();
        w
    }

    /// Wrap externally supplied samples (no analytic source).
    pub fn from_values(grid: MomentumGrid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.nq() * grid.nk() {
            return Err(Error::GridMismatch(format!("{} values for a {}x{} grid", values.len(), grid.nq(), grid.nk())));
        }
        let mut w = WavefunctionGrid { grid, values, norm_check: 0.0, chi0: C64::new(1.0, 0.0), source: None };
        w.norm_check = w.weighted_norm_sqr();
        Ok(w)
    }

    pub fn at(&self, iq: usize, ik: usize) -> C64 {
        self.values[iq * self.grid.nk() + ik]
    }

    pub fn weighted_norm_sqr(&self) -> f64 {
        let nk = self.grid.nk();
        self.values
            .par_chunks(nk)
            .zip(self.grid.q_weights.par_iter())
            .map(|(row, &wq)| wq * row.iter().zip(&self.grid.k_weights).map(|(v, &wk)| wk * v.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// Weighted inner product ⟨self, other⟩ on a shared grid.
    pub fn inner(&self, other: &WavefunctionGrid) -> Result<C64> {
        if self.grid.q_nodes != other.grid.q_nodes || self.grid.k_nodes != other.grid.k_nodes {
            return Err(Error::GridMismatch("inner product needs identical node sets".into()));
        }
        let nk = self.grid.nk();
        let mut s = C64::new(0.0, 0.0);
        for (iq, &wq) in self.grid.q_weights.iter().enumerate() {
            for (ik, &wk) in self.grid.k_weights.iter().enumerate() {
                s += self.values[iq * nk + ik].conj() * other.values[iq * nk + ik] * (wq * wk);
            }
        }
        Ok(s)
    }

    /// Same amplitudes with the roles of the two axes exchanged.
    pub fn transposed(&self) -> WavefunctionGrid {
        let (nq, nk) = (self.grid.nq(), self.grid.nk());
        let mut values = vec![C64::new(0.0, 0.0); nq * nk];
        for iq in 0..nq {
            for ik in 0..nk {
                values[ik * nq + iq] = self.values[iq * nk + ik];
            }
        }
        WavefunctionGrid { grid: self.grid.transposed(), values, norm_check: self.norm_check, chi0: self.chi0, source: None }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "dq,dk,re_B,im_B,abs2_B")?;
        let nk = self.grid.nk();
        for (iq, &q) in self.grid.q_nodes.iter().enumerate() {
            for (ik, &k) in self.grid.k_nodes.iter().enumerate() {
                let v = self.values[iq * nk + ik];
                writeln!(out, "{},{},{},{},{}", num(q), num(k), num(v.re), num(v.im), num(v.norm_sqr()))?;
            }
        }
        Ok(())
    }
}

/// Rescale by a real positive χ₀ so that ∑∑ w_q w_k |B|² = 1.
pub fn normalize(w: &WavefunctionGrid) -> Result<WavefunctionGrid> {
    let n2 = w.weighted_norm_sqr();
    if !(n2.is_finite() && n2 > 0.0) {
        return Err(Error::DegenerateState(format!("cannot normalize: weighted norm is {n2}")));
    }
    let s = n2.sqrt().recip();
    let values: Vec<C64> = w.values.par_iter().map(|v| v * s).collect();
    let mut out = WavefunctionGrid { grid: w.grid.clone(), values, norm_check: 0.0, chi0: w.chi0 * s, source: w.source.clone() };
    out.norm_check = out.weighted_norm_sqr();
    Ok(out)
}

/// Density over Δq: ∑_k w_k |B(q,k)|².
pub fn atom_marginal(w: &WavefunctionGrid) -> Vec<f64> {
    let nk = w.grid.nk();
    w.values
        .par_chunks(nk)
        .map(|row| row.iter().zip(&w.grid.k_weights).map(|(v, &wk)| wk * v.norm_sqr()).sum())
        .collect()
}

/// Density over Δk: ∑_q w_q |B(q,k)|².
pub fn photon_marginal(w: &WavefunctionGrid) -> Vec<f64> {
    let nk = w.grid.nk();
    let mut p = vec![0.0; nk];
    for (row, &wq) in w.values.chunks(nk).zip(&w.grid.q_weights) {
        for (pk, v) in p.iter_mut().zip(row) {
            *pk += wq * v.norm_sqr();
        }
    }
    p
}

/// |⟨a, b⟩| / (‖a‖‖b‖) on a shared grid.
pub fn normalized_overlap(a: &WavefunctionGrid, b: &WavefunctionGrid) -> Result<f64> {
    Ok(a.inner(b)?.norm() / (a.weighted_norm_sqr() * b.weighted_norm_sqr()).sqrt())
}

/// Relative L2 distance between two normalized states after removing the
/// global phase.
pub fn phase_aligned_distance(a: &WavefunctionGrid, b: &WavefunctionGrid) -> Result<f64> {
    let ov = a.inner(b)?;
    let na = a.weighted_norm_sqr();
    let nb = b.weighted_norm_sqr();
    let d2 = na + nb - 2.0 * ov.norm();
    Ok(d2.max(0.0).sqrt() / na.sqrt())
}
