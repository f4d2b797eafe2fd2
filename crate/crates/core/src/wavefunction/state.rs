//! The analytic steady state B(Δq, Δk) = G(Δq)·F(Δq+Δk) as a sum of pole
//! terms, with closed forms for the quantities built from it.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::model::{DerivedCoefficients, ModelParams};

const TWO_PI: f64 = std::f64::consts::TAU;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PoleTerm {
    #[serde(serialize_with = "ser_c64")]
    pub amp: C64,
    #[serde(serialize_with = "ser_c64")]
    pub pole: C64,
}

fn ser_c64<S: serde::Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

/// Unnormalized steady state. F(u) = −i Σ amp_j / (iu + pole_j) and
/// G(q) = exp(−(q/η)²). Every pole has negative real part.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteadyState {
    pub eta: f64,
    pub terms: Vec<PoleTerm>,
}

impl SteadyState {
    /// The exact two-pole state.
    pub fn exact(m: &ModelParams, d: &DerivedCoefficients) -> Self {
        SteadyState {
            eta: m.eta,
            terms: vec![PoleTerm { amp: d.amp1, pole: d.pole1 }, PoleTerm { amp: d.amp2, pole: d.pole2 }],
        }
    }

    /// Single narrow pole e^{−(q/η)²}/(iu − δ²/4) of the dark-state approximation.
    pub fn dark_approx(eta: f64, delta: f64) -> Self {
        SteadyState {
            eta,
            terms: vec![PoleTerm { amp: C64::new(0.0, 1.0), pole: C64::new(-0.25 * delta * delta, 0.0) }],
        }
    }

    pub fn gaussian(&self, dq: f64) -> f64 {
        (-(dq / self.eta).powi(2)).exp()
    }

    /// F(u), the photon bracket.
    pub fn bracket(&self, u: f64) -> C64 {
        let iu = C64::new(0.0, u);
        let s: C64 = self.terms.iter().map(|t| t.amp / (iu + t.pole)).sum();
        C64::new(s.im, -s.re)
    }

    /// Unnormalized amplitude G(dq)·F(dq + dk).
    pub fn amplitude(&self, dq: f64, dk: f64) -> C64 {
        self.bracket(dq + dk) * self.gaussian(dq)
    }

    pub fn spectral_density(&self, u: f64) -> f64 {
        self.bracket(u).norm_sqr()
    }

    /// Time-domain bracket f(t) = i Σ amp_j e^{pole_j t}, with F(u) = ∫₀^∞ f(t) e^{iut} dt.
    pub fn time_amplitude(&self, t: f64) -> C64 {
        let s: C64 = self.terms.iter().map(|p| p.amp * (p.pole * t).exp()).sum();
        C64::new(-s.im, s.re)
    }

    /// |f(t)|² summed in closed form.
    pub fn time_density(&self, t: f64) -> f64 {
        self.time_amplitude(t).norm_sqr()
    }

    /// ∫_T^∞ |f(t)|² dt.
    pub fn time_tail(&self, t: f64) -> f64 {
        let mut s = C64::new(0.0, 0.0);
        for a in &self.terms {
            for b in &self.terms {
                let beta = a.pole + b.pole.conj();
                s += a.amp * b.amp.conj() * (beta * t).exp() / (-beta);
            }
        }
        s.re
    }

    /// H(τ) = ∫ F(u) F*(u − τ) du = 2π Σ amp_i amp_j* / (−pole_i − pole_j* − iτ).
    pub fn autocorrelation(&self, tau: f64) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for a in &self.terms {
            for b in &self.terms {
                s += a.amp * b.amp.conj() / (-a.pole - b.pole.conj() - C64::new(0.0, tau));
            }
        }
        s * TWO_PI
    }

    /// ∫ |F(u)|² du over the real line.
    pub fn spectral_mass(&self) -> f64 {
        self.autocorrelation(0.0).re
    }

    /// ∫_{u0}^{u1} |F(u)|² du from the partial-fraction antiderivative, with
    /// logarithm branches chosen continuous along the real u axis.
    pub fn spectral_mass_between(&self, u0: f64, u1: f64) -> f64 {
        let prim = |u: f64| -> C64 {
            let iu = C64::new(0.0, u);
            let mut s = C64::new(0.0, 0.0);
            for a in &self.terms {
                for b in &self.terms {
                    let l1 = C64::new(0.0, -1.0) * (-iu - a.pole).ln();
                    let l2 = C64::new(0.0, 1.0) * (iu - b.pole.conj()).ln();
                    s += a.amp * b.amp.conj() / (a.pole + b.pole.conj()) * (l1 + l2);
                }
            }
            s
        };
        (prim(u1) - prim(u0)).re
    }

    /// ∫∫ |B|² dq dk.
    pub fn norm_sqr(&self) -> f64 {
        self.eta * (std::f64::consts::PI / 2.0).sqrt() * self.spectral_mass()
    }

    fn narrow(&self) -> &PoleTerm {
        self.terms
            .iter()
            .min_by(|a, b| a.pole.re.abs().total_cmp(&b.pole.re.abs()))
            .expect("at least one pole term")
    }

    /// Centre of the narrow Lorentzian in u = Δq + Δk.
    pub fn narrow_center(&self) -> f64 {
        -self.narrow().pole.im
    }

    /// Half width at half maximum of the narrow Lorentzian, |Re pole|.
    pub fn narrow_width(&self) -> f64 {
        self.narrow().pole.re.abs()
    }

    /// Largest decay rate among the pole terms.
    pub fn broad_width(&self) -> f64 {
        self.terms.iter().map(|t| t.pole.re.abs()).fold(0.0, f64::max)
    }

    /// Centres of all Lorentzians in u, useful as quadrature breakpoints.
    pub fn centers(&self) -> Vec<f64> {
        self.terms.iter().map(|t| -t.pole.im).collect()
    }
}
