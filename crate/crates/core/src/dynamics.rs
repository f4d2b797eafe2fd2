//! Time-domain oracle: fixed-step RK4 integration of the single-excitation
//! amplitude equations, checked against the analytic steady state.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{derived_coefficients, InitialCoherence, ModelParams};
use crate::wavefunction::{MomentumGrid, SteadyState, WavefunctionGrid};

/// Sign of the photon detunings. `Steady` uses Δa = Δq+Δk, Δb = Δa+δ, the
/// frame whose stationary phase reproduces the analytic denominators.
/// `Literal` is the opposite sign, Δa = −(Δq+Δk), Δb = Δa−δ; it is kept
/// so the tests can show that it does not reach the analytic state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DetuningConvention {
    Steady,
    Literal,
}

impl DetuningConvention {
    fn sign(self) -> f64 {
        match self {
            DetuningConvention::Steady => 1.0,
            DetuningConvention::Literal => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Time between rows of the convergence table.
    pub record_interval: f64,
    /// Largest allowed excited population (relative to the initial one) at t_final.
    pub population_tol: f64,
    pub convention: DetuningConvention,
}

impl IntegratorConfig {
    /// dt = 0.01 and t_final = 50 / max(1e−6, min(1, slowest decay rate)).
    pub fn default_for(m: &ModelParams, c: &InitialCoherence) -> Result<Self> {
        let d = derived_coefficients(m, c)?;
        let slow = d.pole1.re.abs().min(d.pole2.re.abs());
        let t_final = 50.0 / slow.clamp(1e-6, 1.0);
        Ok(IntegratorConfig {
            dt: 0.01,
            t_final,
            record_interval: t_final / 50.0,
            population_tol: 1e-4,
            convention: DetuningConvention::Steady,
        })
    }

    pub fn validate(&self, m: &ModelParams) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::domain("dt", format!("must be positive, got {}", self.dt)));
        }
        let limit = 0.1 / m.delta.max(1.0);
        if self.dt > limit {
            return Err(Error::StepSize { dt: self.dt, limit });
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::domain("t_final", format!("must be positive, got {}", self.t_final)));
        }
        if !(self.record_interval > 0.0) {
            return Err(Error::domain("record_interval", "must be positive"));
        }
        Ok(())
    }
}

/// Amplitudes at time tau. a1, a2 are per q node and carry the Gaussian
/// factor; b is per (q, k) node pair, row-major like [`WavefunctionGrid`].
#[derive(Clone, Debug)]
pub struct DynamicsState {
    pub tau: f64,
    pub grid: MomentumGrid,
    pub a1: Vec<C64>,
    pub a2: Vec<C64>,
    pub b: Vec<C64>,
}

impl DynamicsState {
    pub fn photon_field(&self) -> Result<WavefunctionGrid> {
        WavefunctionGrid::from_values(self.grid.clone(), self.b.clone())
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConvergenceRow {
    pub tau: f64,
    pub excited_population: f64,
    pub l2_distance_to_analytic: f64,
}

#[derive(Clone, Debug)]
pub struct DynamicsRun {
    pub state: DynamicsState,
    pub table: Vec<ConvergenceRow>,
    /// Whether |a1|² + |a2|² never increased between steps.
    pub monotone: bool,
}

/// Right-hand side of the amplitude equations at time tau for one node pair
/// with u = Δq + Δk. Returns (da1, da2, db).
pub fn amplitude_rhs(m: &ModelParams, tau: f64, a1: C64, a2: C64, u: f64, conv: DetuningConvention) -> (C64, C64, C64) {
    let kappa = m.kappa();
    let rot = C64::from_polar(1.0, m.delta * tau);
    let da1 = -0.5 * a1 - kappa * a2 * rot;
    let da2 = -0.5 * m.gamma_ratio * a2 - kappa * a1 * rot.conj();
    let s = conv.sign();
    let za = C64::from_polar(1.0, s * u * tau);
    let zb = C64::from_polar(1.0, s * (u + m.delta) * tau);
    let db = C64::new(0.0, -1.0) * (za * a1 + m.g_b() * zb * a2);
    (da1, da2, db)
}

/// One RK4 step of the q-independent excited amplitudes. Returns the new
/// amplitudes and the stage sums c_s = a1_s + g_b e^{±iδτ_s} a2_s that drive b.
fn excited_step(m: &ModelParams, tau: f64, dt: f64, a: [C64; 2], s: f64) -> ([C64; 2], [C64; 3]) {
    let kappa = m.kappa();
    let g = m.gamma_ratio;
    let f = |t: f64, y: [C64; 2]| -> [C64; 2] {
        let rot = C64::from_polar(1.0, m.delta * t);
        [-0.5 * y[0] - kappa * y[1] * rot, -0.5 * g * y[1] - kappa * y[0] * rot.conj()]
    };
    let drive = |t: f64, y: [C64; 2]| y[0] + m.g_b() * C64::from_polar(1.0, s * m.delta * t) * y[1];
    let h = 0.5 * dt;
    let y1 = a;
    let k1 = f(tau, y1);
    let y2 = [y1[0] + h * k1[0], y1[1] + h * k1[1]];
    let k2 = f(tau + h, y2);
    let y3 = [y1[0] + h * k2[0], y1[1] + h * k2[1]];
    let k3 = f(tau + h, y3);
    let y4 = [y1[0] + dt * k3[0], y1[1] + dt * k3[1]];
    let k4 = f(tau + dt, y4);
    let next = [
        a[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        a[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ];
    let c = [drive(tau, y1), drive(tau + h, y2) + drive(tau + h, y3), drive(tau + dt, y4)];
    (next, c)
}

/// Integrate from τ = 0 (b = 0, a = Gaussian × initial coherence) to t_final.
/// The convergence table compares b with the analytic state on the same grid.
pub fn integrate_to_steady(m: &ModelParams, c: &InitialCoherence, grid: &MomentumGrid, cfg: &IntegratorConfig) -> Result<DynamicsRun> {
    if !(m.delta > 0.0) {
        return Err(Error::Trapping { delta: m.delta });
    }
    m.validate()?;
    cfg.validate(m)?;
    grid.check_nodes()?;
    let d = derived_coefficients(m, c)?;
    let analytic = WavefunctionGrid::sample(&SteadyState::exact(m, &d), grid);

    let nq = grid.nq();
    let nk = grid.nk();
    let gauss: Vec<f64> = grid.q_nodes.iter().map(|q| (-(q / m.eta).powi(2)).exp()).collect();
    let us: Vec<f64> = (0..nq * nk).map(|i| grid.q_nodes[i / nk] + grid.k_nodes[i % nk]).collect();
    let s = cfg.convention.sign();
    let dt = cfg.dt;
    let h = 0.5 * dt;
    let nsteps = (cfg.t_final / dt).round().max(1.0) as usize;
    let per_record = ((cfg.record_interval / dt).round() as usize).clamp(1, nsteps);

    let mut a = [c.a10, c.a20];
    let pop0 = a[0].norm_sqr() + a[1].norm_sqr();
    let mut pop_prev = pop0;
    let mut monotone = true;
    let mut b = vec![C64::new(0.0, 0.0); nq * nk];
    let mut z: Vec<C64> = vec![C64::new(1.0, 0.0); nq * nk];
    let half_rot: Vec<C64> = us.iter().map(|&u| C64::from_polar(1.0, s * u * h)).collect();
    let mut table = vec![ConvergenceRow { tau: 0.0, excited_population: 1.0, l2_distance_to_analytic: 1.0 }];

    let mut step = 0;
    let mut stages: Vec<[C64; 3]> = Vec::with_capacity(per_record);
    while step < nsteps {
        let seg = per_record.min(nsteps - step);
        stages.clear();
        for i in 0..seg {
            let tau = (step + i) as f64 * dt;
            let (next, cs) = excited_step(m, tau, dt, a, s);
            a = next;
            stages.push(cs);
            let pop = a[0].norm_sqr() + a[1].norm_sqr();
            if pop > pop_prev * (1.0 + 1e-12) {
                monotone = false;
            }
            pop_prev = pop;
        }
        let scale = C64::new(0.0, -dt / 6.0);
        b.par_iter_mut().zip(z.par_iter_mut()).enumerate().for_each(|(i, (bi, zi))| {
            let rh = half_rot[i];
            let g = gauss[i / nk];
            let mut acc = C64::new(0.0, 0.0);
            let mut zz = *zi;
            for cs in &stages {
                let zh = zz * rh;
                let zn = zh * rh;
                acc += zz * cs[0] + 2.0 * zh * cs[1] + zn * cs[2];
                zz = zn;
            }
            // Recurrence drift is O(steps · ε); renormalizing keeps it there.
            *zi = zz / zz.norm();
            *bi += scale * acc * g;
        });
        step += seg;
        let tau = step as f64 * dt;
        let field = WavefunctionGrid::from_values(grid.clone(), b.clone())?;
        let dist = compare_steady_fields(&field, &analytic)?;
        table.push(ConvergenceRow { tau, excited_population: pop_prev / pop0, l2_distance_to_analytic: dist });
    }

    let final_pop = pop_prev / pop0;
    let tau = nsteps as f64 * dt;
    if final_pop > cfg.population_tol {
        let need = 10.0 / d.pole1.re.abs().min(d.pole2.re.abs());
        return Err(Error::Convergence(format!(
            "excited population {final_pop:.3e} exceeds {:.0e} at t_final = {tau}; t_final ≈ {need:.4} is required",
            cfg.population_tol
        )));
    }
    let a1 = gauss.iter().map(|&g| a[0] * g).collect();
    let a2 = gauss.iter().map(|&g| a[1] * g).collect();
    Ok(DynamicsRun { state: DynamicsState { tau, grid: grid.clone(), a1, a2, b }, table, monotone })
}

fn compare_steady_fields(b: &WavefunctionGrid, a: &WavefunctionGrid) -> Result<f64> {
    let ab = a.inner(b)?;
    let aa = a.weighted_norm_sqr();
    let bb = b.weighted_norm_sqr();
    if aa == 0.0 || bb == 0.0 {
        return Ok(if aa == bb { 0.0 } else { 1.0 });
    }
    // min_c ‖b − c·a‖² = ‖b‖² − |⟨a,b⟩|²/‖a‖².
    let resid = (bb - ab.norm_sqr() / aa).max(0.0);
    Ok((resid / bb).sqrt())
}

/// Relative L2 distance between the integrated photon field and an analytic
/// field on the same grid, after fitting one global complex factor.
pub fn compare_steady(dyn_state: &DynamicsState, analytic: &WavefunctionGrid) -> Result<f64> {
    if dyn_state.grid.q_nodes != analytic.grid.q_nodes || dyn_state.grid.k_nodes != analytic.grid.k_nodes {
        return Err(Error::GridMismatch("dynamics and analytic fields use different nodes".into()));
    }
    compare_steady_fields(&dyn_state.photon_field()?, analytic)
}

/// Fit x_n = α z1ⁿ + β z2ⁿ (Prony's method, least squares over all samples)
/// and return the continuous rates ln(z)/step, slowest decay first.
pub fn fit_two_exponentials(samples: &[C64], step: f64) -> Result<[C64; 2]> {
    if samples.len() < 6 {
        return Err(Error::FitRange("Prony fit needs at least 6 samples".into()));
    }
    // x[n+2] = p1 x[n+1] + p0 x[n]; normal equations for (p1, p0).
    let (mut a11, mut a12, mut a22) = (0.0, C64::new(0.0, 0.0), 0.0);
    let (mut r1, mut r2) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for w in samples.windows(3) {
        let (x0, x1, x2) = (w[0], w[1], w[2]);
        a11 += x1.norm_sqr();
        a12 += x1.conj() * x0;
        a22 += x0.norm_sqr();
        r1 += x1.conj() * x2;
        r2 += x0.conj() * x2;
    }
    let det = a11 * a22 - a12.norm_sqr();
    if det.abs() <= 1e-300 {
        return Err(Error::FitRange("Prony system is singular".into()));
    }
    let p1 = (r1 * a22 - a12 * r2) / det;
    let p0 = (r2 * a11 - a12.conj() * r1) / det;
    let disc = (p1 * p1 + 4.0 * p0).sqrt();
    let z1 = 0.5 * (p1 + disc);
    let z2 = 0.5 * (p1 - disc);
    let mut rates = [z1.ln() / step, z2.ln() / step];
    rates.sort_by(|x, y| x.re.abs().total_cmp(&y.re.abs()));
    Ok(rates)
}

/// Sample the q-independent amplitude a1(τ) every `every` steps.
pub fn excited_trajectory(m: &ModelParams, c: &InitialCoherence, dt: f64, nsteps: usize, every: usize) -> Vec<(C64, C64)> {
    let mut a = [c.a10, c.a20];
    let mut out = vec![(a[0], a[1])];
    for n in 0..nsteps {
        a = excited_step(m, n as f64 * dt, dt, a, 1.0).0;
        if (n + 1) % every == 0 {
            out.push((a[0], a[1]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::coherence_from_r_theta;
    use std::f64::consts::PI;

    fn oracle_grid(eta: f64) -> MomentumGrid {
        MomentumGrid::uniform(eta, 5.0, 64, 20.0, 256).unwrap()
    }

    fn cfg(dt: f64, t_final: f64) -> IntegratorConfig {
        IntegratorConfig { dt, t_final, record_interval: t_final / 10.0, population_tol: 1e-4, convention: DetuningConvention::Steady }
    }

    #[test]
    fn decoupled_limit_is_single_exponential() {
        let m = ModelParams { gamma_ratio: 1.0, epsilon: 1e-12, delta: 0.3, eta: 0.5 };
        let c = coherence_from_r_theta(0.7, 1.1).unwrap();
        let traj = excited_trajectory(&m, &c, 0.01, 2000, 100);
        for (n, (a1, _)) in traj.iter().enumerate() {
            let want = c.a10 * (-0.5 * n as f64).exp();
            assert!((a1 - want).norm() < 1e-10, "step {n}");
        }
    }

    #[test]
    fn dark_state_traps_at_zero_splitting() {
        // δ = 0, ε = g = 1: d(a1 − a2)/dτ = 0 for any state, and a dark
        // vector a1 = −a2 does not move at all.
        let m = ModelParams { gamma_ratio: 1.0, epsilon: 1.0, delta: 0.0, eta: 0.5 };
        let (d1, d2, _) = amplitude_rhs(&m, 1.7, C64::new(0.3, -0.2), C64::new(-0.1, 0.4), 0.0, DetuningConvention::Steady);
        assert!((d1 - d2).norm() < 1e-15);
        let (z1, z2, _) = amplitude_rhs(&m, 2.0, C64::new(0.5, 0.1), C64::new(-0.5, -0.1), 0.0, DetuningConvention::Steady);
        assert!(z1.norm() < 1e-15 && z2.norm() < 1e-15);
    }

    #[test]
    fn trapping_and_step_size_rejected() {
        let grid = oracle_grid(0.3);
        let c = InitialCoherence::dark();
        let m0 = ModelParams { gamma_ratio: 1.0, epsilon: 1.0, delta: 0.0, eta: 0.3 };
        assert!(matches!(integrate_to_steady(&m0, &c, &grid, &cfg(0.01, 10.0)), Err(Error::Trapping { .. })));
        let m = ModelParams::new(0.2, 0.3).unwrap();
        assert!(matches!(integrate_to_steady(&m, &c, &grid, &cfg(0.2, 10.0)), Err(Error::StepSize { .. })));
        let big = ModelParams::new(4.0, 0.3).unwrap();
        assert!(matches!(integrate_to_steady(&big, &c, &grid, &cfg(0.05, 10.0)), Err(Error::StepSize { .. })));
    }

    #[test]
    fn prony_recovers_pole_rates() {
        for (delta, g) in [(0.05, 1.0), (0.2, 0.5), (0.5, 2.0), (0.3, 1.3)] {
            let m = ModelParams { gamma_ratio: g, epsilon: 1.0, delta, eta: 0.3 };
            let c = coherence_from_r_theta(0.3, 2.0).unwrap();
            let d = derived_coefficients(&m, &c).unwrap();
            let traj = excited_trajectory(&m, &c, 0.01, 3000, 10);
            let a1: Vec<C64> = traj.iter().map(|x| x.0).collect();
            let rates = fit_two_exponentials(&a1, 0.1).unwrap();
            let mut want = [d.pole1, d.pole2];
            want.sort_by(|x, y| x.re.abs().total_cmp(&y.re.abs()));
            for (r, w) in rates.iter().zip(&want) {
                assert!((r.re - w.re).abs() < 0.01 * w.re.abs(), "δ={delta} g={g}: {r} vs {w}");
            }
        }
    }

    #[test]
    fn bright_state_decays_fast() {
        let m = ModelParams::new(0.2, 0.3).unwrap();
        let c = coherence_from_r_theta(0.0, 0.0).unwrap();
        let dark = coherence_from_r_theta(0.0, PI).unwrap();
        // After ten fast decay times the bright state has mostly emitted,
        // the dark one has barely started.
        let pop = |c: &InitialCoherence| {
            let (a1, a2) = excited_trajectory(&m, c, 0.01, 2000, 2000)[1];
            a1.norm_sqr() + a2.norm_sqr()
        };
        let (pb, pd) = (pop(&c), pop(&dark));
        assert!(pb < 0.05 && pd > 0.6, "bright {pb}, dark {pd}");
    }

    #[test]
    fn decoupled_single_path_matches_lorentzian() {
        let m = ModelParams { gamma_ratio: 1.0, epsilon: 1e-12, delta: 0.2, eta: 0.3 };
        let c = InitialCoherence::from_amplitudes(C64::new(1.0, 0.0), C64::new(0.0, 0.0)).unwrap();
        let grid = oracle_grid(0.3);
        let run = integrate_to_steady(&m, &c, &grid, &cfg(0.02, 40.0)).unwrap();
        let lorentz: Vec<C64> = (0..grid.nq() * grid.nk())
            .map(|i| {
                let q = grid.q_nodes[i / grid.nk()];
                let u = q + grid.k_nodes[i % grid.nk()];
                (-(q / 0.3f64).powi(2)).exp() / C64::new(-0.5, u)
            })
            .collect();
        let want = WavefunctionGrid::from_values(grid.clone(), lorentz).unwrap();
        let dist = compare_steady(&run.state, &want).unwrap();
        assert!(dist < 1e-3, "{dist}");
        assert!(run.monotone);
    }

    #[test]
    fn compare_to_self_is_zero() {
        let m = ModelParams::new(0.3, 0.5).unwrap();
        let c = coherence_from_r_theta(0.0, 0.0).unwrap();
        let grid = MomentumGrid::uniform(0.5, 5.0, 16, 20.0, 32).unwrap();
        let run = integrate_to_steady(&m, &c, &grid, &cfg(0.02, 450.0)).unwrap();
        let f = run.state.photon_field().unwrap();
        // The distance is a square root of a cancelling difference.
        assert!(compare_steady(&run.state, &f).unwrap() < 1e-7);
        let other = MomentumGrid::uniform(0.5, 5.0, 16, 20.0, 33).unwrap();
        let g = WavefunctionGrid::sample(&SteadyState::dark_approx(0.5, 0.3), &other);
        assert!(matches!(compare_steady(&run.state, &g), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn literal_sign_convention_misses_the_steady_state() {
        let m = ModelParams::new(0.3, 0.3).unwrap();
        let c = coherence_from_r_theta(0.0, PI).unwrap();
        let grid = MomentumGrid::uniform(0.3, 5.0, 16, 20.0, 128).unwrap();
        let mut conf = cfg(0.02, 400.0);
        let steady = integrate_to_steady(&m, &c, &grid, &conf).unwrap();
        conf.convention = DetuningConvention::Literal;
        let literal = integrate_to_steady(&m, &c, &grid, &conf).unwrap();
        let d_ok = steady.table.last().unwrap().l2_distance_to_analytic;
        let d_bad = literal.table.last().unwrap().l2_distance_to_analytic;
        assert!(d_ok < 1e-3, "{d_ok}");
        assert!(d_bad > 0.5, "{d_bad}");
    }

    #[test]
    fn halving_dt_barely_changes_b() {
        let m = ModelParams::new(0.3, 0.3).unwrap();
        let c = coherence_from_r_theta(0.2, 2.5).unwrap();
        let grid = MomentumGrid::uniform(0.3, 5.0, 16, 20.0, 64).unwrap();
        let a = integrate_to_steady(&m, &c, &grid, &cfg(0.02, 300.0)).unwrap();
        let b = integrate_to_steady(&m, &c, &grid, &cfg(0.01, 300.0)).unwrap();
        let fa = a.state.photon_field().unwrap();
        let fb = b.state.photon_field().unwrap();
        let diff: f64 = fa.values.iter().zip(&fb.values).map(|(x, y)| (x - y).norm_sqr()).sum();
        let norm: f64 = fb.values.iter().map(|x| x.norm_sqr()).sum();
        assert!((diff / norm).sqrt() < 1e-6, "{}", (diff / norm).sqrt());
    }

    #[test]
    fn population_shortfall_reports_required_time() {
        let m = ModelParams::new(0.2, 0.3).unwrap();
        let grid = MomentumGrid::uniform(0.3, 5.0, 16, 20.0, 32).unwrap();
        let err = integrate_to_steady(&m, &InitialCoherence::dark(), &grid, &cfg(0.02, 50.0)).unwrap_err();
        assert!(err.is_convergence());
        assert!(err.to_string().contains("t_final"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]
            #[test]
            fn fitted_rates_match_poles(delta in 0.05f64..0.5, g in 0.5f64..2.0, r in -1.0f64..1.0, theta in 0.0f64..std::f64::consts::TAU) {
                let m = ModelParams { gamma_ratio: g, epsilon: 1.0, delta, eta: 0.3 };
                let c = coherence_from_r_theta(r, theta).unwrap();
                let d = derived_coefficients(&m, &c).unwrap();
                let traj = excited_trajectory(&m, &c, 0.01, 3000, 10);
                let a1: Vec<C64> = traj.iter().map(|x| x.0).collect();
                let a2: Vec<C64> = traj.iter().map(|x| x.1).collect();
                // Use whichever component carries both exponentials more evenly.
                let rates = fit_two_exponentials(&a1, 0.1).or_else(|_| fit_two_exponentials(&a2, 0.1)).unwrap();
                let mut want = [d.pole1, d.pole2];
                want.sort_by(|x, y| x.re.abs().total_cmp(&y.re.abs()));
                for (got, w) in rates.iter().zip(&want) {
                    prop_assert!((got.re - w.re).abs() < 0.01 * w.re.abs(), "{} vs {}", got, w);
                }
            }

            #[test]
            fn excited_population_never_grows(delta in 0.05f64..1.0, r in -2.0f64..2.0, theta in 0.0f64..std::f64::consts::TAU) {
                let m = ModelParams::new(delta, 0.3).unwrap();
                let c = coherence_from_r_theta(r, theta).unwrap();
                let traj = excited_trajectory(&m, &c, 0.01, 2000, 1);
                let pops: Vec<f64> = traj.iter().map(|(a, b)| a.norm_sqr() + b.norm_sqr()).collect();
                for w in pops.windows(2) {
                    prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
                }
            }
        }
    }
}
