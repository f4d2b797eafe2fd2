//! Unconditional and conditional atom-momentum variances and the R ratio,
//! on a sampled grid and directly on the analytic state.

use crate::error::{Error, Result};
use crate::optimize::{golden_max, scan_max};
use crate::quad::{integrate, integrate_vec, QuadOptions};
use crate::wavefunction::{atom_marginal, photon_marginal, SteadyState, WavefunctionGrid};

fn moments(x: &[f64], w: &[f64], p: &[f64]) -> (f64, f64) {
    let m0: f64 = p.iter().zip(w).map(|(p, w)| p * w).sum();
    let m1: f64 = x.iter().zip(p).zip(w).map(|((x, p), w)| x * p * w).sum::<f64>() / m0;
    let m2: f64 = x.iter().zip(p).zip(w).map(|((x, p), w)| (x - m1).powi(2) * p * w).sum::<f64>() / m0;
    (m1, m2)
}

/// Variance of Δq under the atom marginal of a grid state.
pub fn unconditional_variance(w: &WavefunctionGrid) -> f64 {
    moments(&w.grid.q_nodes, &w.grid.q_weights, &atom_marginal(w)).1
}

/// Variance of Δq under |B(Δq, dk0)|², with B linearly interpolated in Δk.
pub fn conditional_variance(w: &WavefunctionGrid, dk0: f64) -> Result<f64> {
    let k = &w.grid.k_nodes;
    let (lo, hi) = (k[0], k[k.len() - 1]);
    if !(dk0 >= lo && dk0 <= hi) {
        return Err(Error::Range { what: "dk0", value: dk0, lo, hi });
    }
    let j = k.partition_point(|&x| x <= dk0).clamp(1, k.len() - 1);
    let s = (dk0 - k[j - 1]) / (k[j] - k[j - 1]);
    let p: Vec<f64> = (0..w.grid.nq()).map(|i| (w.at(i, j - 1) * (1.0 - s) + w.at(i, j) * s).norm_sqr()).collect();
    if p.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateState(format!("conditional density vanishes at dk0 = {dk0}")));
    }
    Ok(moments(&w.grid.q_nodes, &w.grid.q_weights, &p).1)
}

pub fn r_ratio(w: &WavefunctionGrid, dk0: f64) -> Result<f64> {
    Ok(unconditional_variance(w) / conditional_variance(w, dk0)?)
}

/// Node of largest photon-marginal density.
pub fn photon_peak_grid(w: &WavefunctionGrid) -> f64 {
    let p = photon_marginal(w);
    let i = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|x| x.0).unwrap_or(0);
    w.grid.k_nodes[i]
}

/// η²/4, the variance of e^{−2(Δq/η)²}; exact for any state of the form
/// G(Δq)·F(Δq+Δk) integrated over all Δk.
pub fn single_variance_analytic(s: &SteadyState) -> f64 {
    s.eta * s.eta / 4.0
}

fn q_breakpoints(s: &SteadyState, dk: f64) -> Vec<f64> {
    let l = 8.0 * s.eta;
    let mut pts = vec![-l, -s.eta, 0.0, s.eta, l];
    for t in &s.terms {
        let c = -t.pole.im - dk;
        let a = t.pole.re.abs();
        for m in [0.0, 3.0, -3.0, 30.0, -30.0, 300.0, -300.0] {
            let x = c + m * a;
            if x > -l && x < l {
                pts.push(x);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn conditional_density(s: &SteadyState, dk0: f64) -> impl Fn(f64) -> f64 + '_ {
    move |q| {
        let g = s.gaussian(q);
        g * g * s.spectral_density(q + dk0)
    }
}

/// Variance of Δq under G(Δq)²|F(Δq+dk0)|², by adaptive quadrature.
pub fn conditional_variance_analytic(s: &SteadyState, dk0: f64, rel_tol: f64) -> Result<f64> {
    let pts = q_breakpoints(s, dk0);
    let dens = conditional_density(s, dk0);
    let opts = QuadOptions { rel_tol, abs_tol: 0.0, max_intervals: 50_000 };
    let m0 = integrate(&dens, &pts, opts)?;
    if !(m0 > 0.0) {
        return Err(Error::DegenerateState(format!("conditional density vanishes at dk0 = {dk0}")));
    }
    // Moments about the narrow centre keep the subtraction well conditioned.
    let c = s.narrow_center() - dk0;
    let first = integrate_vec(
        |q| {
            let d = dens(q);
            [(q - c) * d]
        },
        &pts,
        QuadOptions { abs_tol: rel_tol * m0 * s.eta * 1e-3, ..opts },
    )?;
    let mean = c + first.value[0] / m0;
    let second = integrate(|q| (q - mean).powi(2) * dens(q), &pts, opts)?;
    Ok(second / m0)
}

/// Photon marginal ∫ G(q)²|F(q+k)|² dq (unnormalized).
pub fn photon_marginal_analytic(s: &SteadyState, k: f64, rel_tol: f64) -> Result<f64> {
    integrate(conditional_density(s, k), &q_breakpoints(s, k), QuadOptions { rel_tol, abs_tol: 0.0, max_intervals: 50_000 })
}

/// Argmax of the analytic photon marginal. Each Lorentzian centre is
/// scanned over a window a few (η + width) wide, then refined.
pub fn photon_peak_analytic(s: &SteadyState) -> Result<f64> {
    // Quadrature failures score as −∞ so the scan moves past them.
    let tol = 1e-9;
    let eval = |k: f64| photon_marginal_analytic(s, k, tol);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for t in &s.terms {
        let c = -t.pole.im;
        let span = 4.0 * (s.eta + t.pole.re.abs());
        let xs: Vec<f64> = (0..=160).map(|i| c - span + 2.0 * span * i as f64 / 160.0).collect();
        let f = |k: f64| eval(k).unwrap_or(f64::NEG_INFINITY);
        let (x, fx) = scan_max(f, &xs, 1e-10 * (1.0 + span));
        if fx > best.1 {
            best = (x, fx);
        }
    }
    // Polish on a bracket one scan cell wide.
    let cell = 4.0 * (s.eta + s.narrow_width()) / 80.0;
    let (x, fx) = golden_max(|k| eval(k).unwrap_or(f64::NEG_INFINITY), best.0 - cell, best.0 + cell, 1e-12);
    Ok(if fx >= best.1 { x } else { best.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{coherence_from_r_theta, derived_coefficients, ModelParams};
    use crate::wavefunction::{normalize, MomentumGrid, WavefunctionGrid};
    use num_complex::Complex64 as C64;
    use std::f64::consts::PI;

    fn state(delta: f64, eta: f64, r: f64, theta: f64) -> SteadyState {
        let m = ModelParams::new(delta, eta).unwrap();
        let c = coherence_from_r_theta(r, theta).unwrap();
        SteadyState::exact(&m, &derived_coefficients(&m, &c).unwrap())
    }

    #[test]
    fn dark_conditional_variance_small_delta_limit() {
        // Gaussian × narrow Lorentzian: var ≈ η (δ²/4) / √(2π).
        let s = state(0.02, 0.1, 0.0, PI);
        let dk0 = photon_peak_analytic(&s).unwrap();
        let v = conditional_variance_analytic(&s, dk0, 1e-10).unwrap();
        let want = 0.1 * 1e-4 / (2.0 * PI).sqrt();
        assert!((v - want).abs() < 0.1 * want, "{v} {want}");
        let r = single_variance_analytic(&s) / v;
        assert!((r - 626.7).abs() < 0.1 * 626.7, "{r}");
    }

    #[test]
    fn analytic_conditional_variance_matches_independent_quadrature() {
        // Oracle: the single-Lorentzian moment integral written out directly.
        let (eta, delta) = (0.3, 0.05);
        let s = SteadyState::dark_approx(eta, delta);
        let w = delta * delta / 4.0;
        let dk0 = 0.02;
        let dens = |x: f64| (-2.0 * (x / eta).powi(2)).exp() / ((x + dk0).powi(2) + w * w);
        let pts = [-8.0 * eta, -dk0 - 100.0 * w, -dk0, -dk0 + 100.0 * w, 8.0 * eta];
        let o = QuadOptions { rel_tol: 1e-12, abs_tol: 0.0, max_intervals: 50_000 };
        let m0 = integrate(dens, &pts, o).unwrap();
        let m1 = integrate(|x| x * dens(x), &pts, o).unwrap() / m0;
        let m2 = integrate(|x| (x - m1).powi(2) * dens(x), &pts, o).unwrap() / m0;
        let v = conditional_variance_analytic(&s, dk0, 1e-11).unwrap();
        assert!((v - m2).abs() < 1e-8 * m2, "{v} {m2}");
    }

    #[test]
    fn grid_and_analytic_paths_agree_on_a_resolving_grid() {
        let s = state(0.3, 0.5, 0.2, 2.5);
        let a = s.narrow_width();
        let nq = (10.0 * 0.5 / (0.5 * a)).ceil() as usize + 1;
        let grid = MomentumGrid::uniform(0.5, 5.0, nq, 40.0, 4001).unwrap();
        let w = normalize(&WavefunctionGrid::sample(&s, &grid)).unwrap();
        // At a k node the grid path needs no interpolation across the
        // narrow line.
        let peak = photon_peak_analytic(&s).unwrap();
        let dk0 = grid.k_nodes[grid.k_nodes.partition_point(|&k| k < peak)];
        let va = conditional_variance_analytic(&s, dk0, 1e-10).unwrap();
        let vg = conditional_variance(&w, dk0).unwrap();
        assert!((va - vg).abs() < 1e-3 * va, "{va} {vg}");
        let vu = unconditional_variance(&w);
        assert!((vu - 0.0625).abs() < 0.02 * 0.0625, "{vu}");
    }

    #[test]
    fn separable_state_gives_unit_ratio() {
        let grid = MomentumGrid::uniform(0.2, 5.0, 81, 20.0, 161).unwrap();
        let vals: Vec<C64> = (0..81 * 161)
            .map(|i| {
                let q = grid.q_nodes[i / 161];
                let k = grid.k_nodes[i % 161];
                C64::new((-(q / 0.2f64).powi(2)).exp() / (1.0 + k * k), 0.0)
            })
            .collect();
        let w = normalize(&WavefunctionGrid::from_values(grid, vals).unwrap()).unwrap();
        for dk0 in [-3.0, 0.0, 1.7] {
            let r = r_ratio(&w, dk0).unwrap();
            assert!((r - 1.0).abs() < 1e-12, "{r}");
        }
        assert!(matches!(r_ratio(&w, 25.0), Err(Error::Range { .. })));
    }

    #[test]
    fn photon_peak_sits_near_the_narrow_centre() {
        let s = state(0.04, 0.7, 0.0, PI);
        let k = photon_peak_analytic(&s).unwrap();
        assert!((k + 0.02).abs() < 0.01, "{k}");
        let p0 = photon_marginal_analytic(&s, k, 1e-10).unwrap();
        for dk in [-1e-3, 1e-3, 0.05] {
            assert!(photon_marginal_analytic(&s, k + dk, 1e-10).unwrap() <= p0 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn bright_coherence_ratio_is_small() {
        for (delta, eta) in [(0.1, 0.2), (0.05, 0.1)] {
            let s = state(delta, eta, 0.0, 0.0);
            let dk0 = photon_peak_analytic(&s).unwrap();
            let r = single_variance_analytic(&s) / conditional_variance_analytic(&s, dk0, 1e-10).unwrap();
            assert!((1.0 - 1e-6..2.0).contains(&r), "δ={delta} η={eta}: {r}");
        }
    }
}
