//! Entanglement measures: variances and R, Schmidt decomposition and K,
//! phase entanglement, and the small-δ closed forms.

pub mod eigen;
mod kernel;
mod lanczos;
mod schmidt;
mod variance;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use kernel::{KernelInfo, KernelOptions, TimeKernel};
pub use lanczos::top_eigenpairs;
pub use schmidt::{
    coherent_profile, cross_validate, incoherent_profile, profile_variance, schmidt_decompose, schmidt_number, truncated_schmidt_numbers,
    Backend, SchmidtOptions, SchmidtResult, Truncation,
};
pub use variance::{
    conditional_variance, conditional_variance_analytic, photon_marginal_analytic, photon_peak_analytic, photon_peak_grid, r_ratio,
    single_variance_analytic, unconditional_variance,
};

use crate::error::{Error, Result};
use crate::model::{derived_coefficients, InitialCoherence, ModelParams, PhysicalParams};
use crate::quad::{integrate, QuadOptions};
use crate::wavefunction::{normalize, GridSpec, MomentumGrid, SteadyState, WavefunctionGrid};

/// PE = 2.2 K / R.
pub fn phase_entanglement(k: f64, r: f64) -> f64 {
    2.2 * k / r
}

/// √(2π) η / δ², the dark-coherence R in the small-δ limit.
pub fn closed_form_r_max(eta: f64, delta: f64) -> f64 {
    (2.0 * PI).sqrt() * eta / (delta * delta)
}

/// 1 + 0.28 (4η/δ² − 1).
pub fn closed_form_k_max(eta: f64, delta: f64) -> f64 {
    1.0 + 0.28 * (4.0 * eta / (delta * delta) - 1.0)
}

/// 1.12 ħk₀δq γ / (m ω₁₂²), the leading term of K_max in physical units.
pub fn k_max_physical(p: &PhysicalParams) -> Result<f64> {
    p.validate()?;
    Ok(1.12 * p.hbar_k0_dq_over_m * p.gamma_a / (p.omega_12 * p.omega_12))
}

/// 2δ/η, the full width of R around the dark coherence in r and in θ.
pub fn closed_form_fwhm(eta: f64, delta: f64) -> f64 {
    2.0 * delta / eta
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ClosedFormValidity {
    /// η < 1 and δ²/η < 0.1.
    pub r_max: bool,
    /// η/δ² ≥ 100.
    pub k_max: bool,
}

pub fn closed_form_validity(eta: f64, delta: f64) -> ClosedFormValidity {
    ClosedFormValidity { r_max: eta < 1.0 && delta * delta / eta < 0.1, k_max: eta / (delta * delta) >= 100.0 }
}

/// K from the purity of ρ(q, q') = G(q)G(q')H(q − q') evaluated in q space:
/// Tr ρ² = ∫ |H(τ)|² C(τ) dτ with C(τ) = ∫G²(q)G²(q − τ)dq = (η√π/2)e^{−τ²/η²}.
/// Independent of the time-domain kernel; used to cross-check it.
pub fn purity_oracle_k(s: &SteadyState, rel_tol: f64) -> Result<f64> {
    let eta = s.eta;
    let l = 7.0 * eta;
    let mut pts = vec![0.0, l];
    for a in &s.terms {
        for b in &s.terms {
            let c = (b.pole.im - a.pole.im).abs();
            let w = (a.pole.re + b.pole.re).abs();
            for m in [0.0, 1.0, 10.0, 100.0] {
                let x = c + m * w;
                if x < l {
                    pts.push(x);
                }
            }
        }
    }
    let c0 = eta * PI.sqrt() / 2.0;
    let num = 2.0
        * integrate(
            |tau| s.autocorrelation(tau).norm_sqr() * c0 * (-(tau / eta).powi(2)).exp(),
            &pts,
            QuadOptions { rel_tol, abs_tol: 0.0, max_intervals: 50_000 },
        )?;
    let tr = s.autocorrelation(0.0).re * eta * (PI / 2.0).sqrt();
    Ok(tr * tr / num)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dk0Policy {
    AutoPeak,
    Explicit(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct ReportOptions {
    pub backend: Backend,
    pub dk0: Dk0Policy,
    pub grid: GridSpec,
    pub kernel: KernelOptions,
    /// Skip K and PE (R-only scans).
    pub compute_k: bool,
    pub quad_rel_tol: f64,
    /// Largest tolerated disagreement between the chosen K path and the
    /// q-space purity oracle.
    pub cross_check_tol: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            backend: Backend::Auto,
            dk0: Dk0Policy::AutoPeak,
            grid: GridSpec::default(),
            kernel: KernelOptions::default(),
            compute_k: true,
            quad_rel_tol: 1e-10,
            cross_check_tol: 0.01,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub r_path: &'static str,
    pub k_backend: Option<&'static str>,
    pub kernel: Option<KernelInfo>,
    pub grid_q_points: Option<usize>,
    pub grid_k_points: Option<usize>,
    pub oracle_schmidt_number: Option<f64>,
    pub oracle_rel_diff: Option<f64>,
    pub narrow_center: f64,
    pub narrow_width: f64,
    pub closed_form_validity: ClosedFormValidity,
}

#[derive(Clone, Debug, Serialize)]
pub struct EntanglementReport {
    pub var_single: f64,
    pub var_cond: f64,
    pub dk0_used: f64,
    pub r_ratio: f64,
    pub schmidt_number: Option<f64>,
    pub phase_entanglement: Option<f64>,
    pub closed_form_r_max: Option<f64>,
    pub closed_form_k_max: Option<f64>,
    pub provenance: Provenance,
}

/// r = 0 and θ ≡ π, up to round-off.
pub fn is_dark(c: &InitialCoherence) -> bool {
    c.r.abs() < 1e-12 && (c.theta_reduced() - PI).abs() < 1e-9
}

/// All measures for one configuration. R is taken from adaptive quadrature
/// of the analytic state; K from the time-domain kernel (or a dense SVD of a
/// resolving grid when `backend = dense`) and checked against the purity
/// oracle.
pub fn entanglement_report(m: &ModelParams, c: &InitialCoherence, opts: &ReportOptions) -> Result<EntanglementReport> {
    m.validate()?;
    let d = derived_coefficients(m, c)?;
    let s = SteadyState::exact(m, &d);
    let dk0 = match opts.dk0 {
        Dk0Policy::AutoPeak => photon_peak_analytic(&s)?,
        Dk0Policy::Explicit(x) => {
            if !x.is_finite() {
                return Err(Error::domain("dk0", "must be finite"));
            }
            x
        }
    };
    let var_single = single_variance_analytic(&s);
    let var_cond = conditional_variance_analytic(&s, dk0, opts.quad_rel_tol)?;
    let r = var_single / var_cond;

    let mut prov = Provenance {
        r_path: "analytic-quadrature",
        k_backend: None,
        kernel: None,
        grid_q_points: None,
        grid_k_points: None,
        oracle_schmidt_number: None,
        oracle_rel_diff: None,
        narrow_center: s.narrow_center(),
        narrow_width: s.narrow_width(),
        closed_form_validity: closed_form_validity(m.eta, m.delta),
    };
    let k = if opts.compute_k {
        let k = match opts.backend {
            Backend::Dense => {
                let grid = MomentumGrid::for_state(&s, &opts.grid)?;
                prov.grid_q_points = Some(grid.nq());
                prov.grid_k_points = Some(grid.nk());
                let w = normalize(&WavefunctionGrid::sample(&s, &grid))?;
                let so = SchmidtOptions { kernel: opts.kernel, ..Default::default() };
                prov.k_backend = Some(Backend::Dense.label());
                schmidt_decompose(&w, Backend::Dense, &so)?.schmidt_number
            }
            Backend::Kernel | Backend::Auto => {
                let kern = TimeKernel::build(&s, &opts.kernel)?;
                prov.k_backend = Some(Backend::Kernel.label());
                prov.kernel = Some(kern.info.clone());
                kern.schmidt_number()
            }
        };
        let oracle = purity_oracle_k(&s, 1e-10)?;
        let rel = (k - oracle).abs() / oracle;
        prov.oracle_schmidt_number = Some(oracle);
        prov.oracle_rel_diff = Some(rel);
        if rel > opts.cross_check_tol {
            let (k_dense, k_kernel) = if opts.backend == Backend::Dense { (k, oracle) } else { (oracle, k) };
            return Err(Error::BackendDisagreement { k_dense, k_kernel, rel });
        }
        Some(k)
    } else {
        None
    };
    let dark = is_dark(c) && m.gamma_ratio == 1.0 && m.epsilon == 1.0;
    Ok(EntanglementReport {
        var_single,
        var_cond,
        dk0_used: dk0,
        r_ratio: r,
        schmidt_number: k,
        phase_entanglement: k.map(|k| phase_entanglement(k, r)),
        closed_form_r_max: dark.then(|| closed_form_r_max(m.eta, m.delta)),
        closed_form_k_max: dark.then(|| closed_form_k_max(m.eta, m.delta)),
        provenance: prov,
    })
}
