//! Physical and dimensionless parameters, the initial upper-level coherence,
//! and the analytic coefficients of the steady-state solution.
//!
//! Everything is expressed in units of the decay rate γa: times in 1/γa,
//! momenta in the recoil-scaled units of Δq and Δk.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parameters in laboratory units (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhysicalParams {
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub omega_12: f64,
    pub epsilon: f64,
    /// ħk₀δq/m, the recoil spread of the atomic wavepacket.
    pub hbar_k0_dq_over_m: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        positive("gamma_a", self.gamma_a)?;
        positive("gamma_b", self.gamma_b)?;
        if !(self.omega_12.is_finite() && self.omega_12 > 0.0) {
            return Err(Error::domain("delta", "delta must be > 0 (omega_12 must be positive)"));
        }
        epsilon_ok(self.epsilon)?;
        positive("hbar_k0_dq_over_m", self.hbar_k0_dq_over_m)
    }
}

/// Dimensionless parameters of one configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    /// γb/γa.
    pub gamma_ratio: f64,
    pub epsilon: f64,
    /// ω₁₂/γa.
    pub delta: f64,
    /// ħk₀δq/(mγa).
    pub eta: f64,
}

impl ModelParams {
    /// Equal widths and parallel dipoles, the reference configuration.
    pub fn new(delta: f64, eta: f64) -> Result<Self> {
        let m = ModelParams { gamma_ratio: 1.0, epsilon: 1.0, delta, eta };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        positive("delta", self.delta)?;
        positive("eta", self.eta)?;
        epsilon_ok(self.epsilon)?;
        positive("gamma_ratio", self.gamma_ratio)
    }

    /// Coupling of path b relative to path a (g_a = 1).
    pub fn g_b(&self) -> f64 {
        self.gamma_ratio.sqrt()
    }

    /// Cross-coupling rate ε√(γaγb)/2 of the amplitude equations.
    pub fn kappa(&self) -> f64 {
        0.5 * self.epsilon * self.gamma_ratio.sqrt()
    }
}

fn positive(field: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(field, format!("{field} must be > 0 (got {x})")))
    }
}

fn epsilon_ok(e: f64) -> Result<()> {
    if e.is_finite() && e > 0.0 && e <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain("epsilon", format!("epsilon must lie in (0, 1] (got {e})")))
    }
}

pub fn dimensionless_from_physical(p: &PhysicalParams) -> Result<ModelParams> {
    p.validate()?;
    Ok(ModelParams {
        gamma_ratio: p.gamma_b / p.gamma_a,
        epsilon: p.epsilon,
        delta: p.omega_12 / p.gamma_a,
        eta: p.hbar_k0_dq_over_m / p.gamma_a,
    })
}

/// Upper-level superposition A10|a⟩ + A20|b⟩ with A10/A20 = e^{r+iθ}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InitialCoherence {
    pub r: f64,
    pub theta: f64,
    #[serde(skip)]
    pub a10: C64,
    #[serde(skip)]
    pub a20: C64,
}

impl InitialCoherence {
    /// The dark-state coherence (r = 0, θ = π).
    pub fn dark() -> Self {
        coherence_from_r_theta(0.0, std::f64::consts::PI).expect("finite")
    }

    /// Build from raw amplitudes; they are normalized, and the global phase is
    /// removed so that a20 is real and non-negative. Either amplitude may vanish.
    pub fn from_amplitudes(a10: C64, a20: C64) -> Result<Self> {
        let n = (a10.norm_sqr() + a20.norm_sqr()).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::domain("coherence", "initial amplitudes must be finite and not both zero"));
        }
        let phase = if a20.norm() > 0.0 { a20.conj() / a20.norm() } else { C64::new(1.0, 0.0) };
        let a10 = a10 * phase / n;
        let a20 = a20 * phase / n;
        let r = (a10.norm() / a20.norm()).ln();
        Ok(InitialCoherence { r, theta: a10.arg(), a10, a20 })
    }

    /// θ reduced to [0, 2π), for reporting.
    pub fn theta_reduced(&self) -> f64 {
        self.theta.rem_euclid(std::f64::consts::TAU)
    }
}

pub fn coherence_from_r_theta(r: f64, theta: f64) -> Result<InitialCoherence> {
    if !r.is_finite() {
        return Err(Error::domain("r", format!("r must be finite (got {r})")));
    }
    if !theta.is_finite() {
        return Err(Error::domain("theta", format!("theta must be finite (got {theta})")));
    }
    // 1/sqrt(1+e^{2r}) written to stay finite for large |r|.
    let a20 = if r > 0.0 {
        (-r).exp() / (1.0 + (-2.0 * r).exp()).sqrt()
    } else {
        1.0 / (1.0 + (2.0 * r).exp()).sqrt()
    };
    let a10_mag = if r > 0.0 {
        1.0 / (1.0 + (-2.0 * r).exp()).sqrt()
    } else {
        r.exp() * a20
    };
    Ok(InitialCoherence {
        r,
        theta,
        a10: C64::from_polar(a10_mag, theta),
        a20: C64::new(a20, 0.0),
    })
}

/// Coefficients of the two-pole steady state, in units of γa.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedCoefficients {
    pub lambda_c: C64,
    pub s1: C64,
    pub s2: C64,
    pub c1: C64,
    pub c2: C64,
    pub pole1: C64,
    pub pole2: C64,
    pub amp1: C64,
    pub amp2: C64,
}

impl DerivedCoefficients {
    pub fn poles(&self) -> [C64; 2] {
        [self.pole1, self.pole2]
    }

    pub fn amps(&self) -> [C64; 2] {
        [self.amp1, self.amp2]
    }

    /// Index of the pole closest to the real axis (the narrow line).
    pub fn narrow_index(&self) -> usize {
        if self.pole1.re.abs() <= self.pole2.re.abs() { 0 } else { 1 }
    }
}

pub fn derived_coefficients(m: &ModelParams, c: &InitialCoherence) -> Result<DerivedCoefficients> {
    m.validate()?;
    let g = m.gamma_ratio;
    let eps = m.epsilon;
    let kappa = m.kappa();
    let lambda_c = C64::new(0.5 * (1.0 - g), m.delta);
    let root = (lambda_c * lambda_c + eps * eps * g).sqrt();
    let s1 = 0.5 * (lambda_c + root);
    let s2 = 0.5 * (lambda_c - root);
    let gap = s2 - s1;
    let scale = s1.norm().max(s2.norm()).max(1.0);
    if gap.norm() <= 1e-12 * scale {
        return Err(Error::Degenerate(format!(
            "s1 = s2 = {s1} (degenerate discriminant at gamma_ratio = {g}, epsilon = {eps}, delta = {})",
            m.delta
        )));
    }
    let c1 = (s2 * c.a10 + kappa * c.a20) / gap;
    let c2 = -(s1 * c.a10 + kappa * c.a20) / gap;
    let half = C64::new(0.5, 0.0);
    // Pole numerators C(2 g_b s/(ε√(γaγb)) − g_a) with g_a = 1, g_b = √g.
    let amp1 = c1 * (2.0 * s1 / eps - 1.0);
    let amp2 = c2 * (2.0 * s2 / eps - 1.0);
    Ok(DerivedCoefficients { lambda_c, s1, s2, c1, c2, pole1: s1 - half, pole2: s2 - half, amp1, amp2 })
}
