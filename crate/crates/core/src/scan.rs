//! Parameter sweeps over (r, θ, η, δ), Lorentzian width fits, the K–R
//! relation table and paired Schmidt-mode comparisons.

use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmt::num;
use crate::measures::{
    closed_form_k_max, entanglement_report, profile_variance, Dk0Policy, EntanglementReport, ReportOptions, TimeKernel,
};
use crate::model::{coherence_from_r_theta, derived_coefficients, ModelParams};
use crate::wavefunction::{trapezoid_weights, uniform_nodes, SteadyState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    R,
    Theta,
    Eta,
    Delta,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::R => "r",
            Axis::Theta => "theta",
            Axis::Eta => "eta",
            Axis::Delta => "delta",
        }
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "r" => Ok(Axis::R),
            "theta" => Ok(Axis::Theta),
            "eta" => Ok(Axis::Eta),
            "delta" => Ok(Axis::Delta),
            other => Err(Error::domain("axis", format!("unknown axis '{other}' (expected r, theta, eta or delta)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Measure {
    R,
    K,
    PE,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::R => "R",
            Measure::K => "K",
            Measure::PE => "PE",
        }
    }
}

impl FromStr for Measure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "R" => Ok(Measure::R),
            "K" => Ok(Measure::K),
            "PE" => Ok(Measure::PE),
            other => Err(Error::domain("measures", format!("unknown measure '{other}' (expected R, K or PE)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AxisSpec {
    pub axis: Axis,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        uniform_nodes(self.min, self.max, self.count)
    }
}

#[derive(Clone, Debug)]
pub struct ScanSpec {
    pub fixed: ModelParams,
    pub r: f64,
    pub theta: f64,
    pub axes: Vec<AxisSpec>,
    pub measures: Vec<Measure>,
    pub options: ReportOptions,
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        self.fixed.validate()?;
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::domain("axes", "a scan sweeps one or two parameters"));
        }
        if self.axes.len() == 2 && self.axes[0].axis == self.axes[1].axis {
            return Err(Error::domain("axes", "the two axes must differ"));
        }
        if self.measures.is_empty() {
            return Err(Error::domain("measures", "at least one measure is required"));
        }
        for a in &self.axes {
            // A single point is allowed so that a one-point scan can reproduce a report.
            if a.count < 3 && !(a.count == 1) {
                return Err(Error::domain("axis", format!("{} needs count ≥ 3 (or exactly 1), got {}", a.axis.name(), a.count)));
            }
            if !(a.min.is_finite() && a.max.is_finite()) || a.max < a.min {
                return Err(Error::domain("axis", format!("{} range [{}, {}] is invalid", a.axis.name(), a.min, a.max)));
            }
            if matches!(a.axis, Axis::Eta | Axis::Delta) && !(a.min > 0.0) {
                return Err(Error::domain("axis", format!("{} must stay > 0", a.axis.name())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanPoint {
    pub coords: Vec<f64>,
    pub r_ratio: Option<f64>,
    pub schmidt_number: Option<f64>,
    pub phase_entanglement: Option<f64>,
    pub dk0_used: Option<f64>,
    /// None when the point succeeded.
    pub failure: Option<String>,
}

impl ScanPoint {
    pub fn value(&self, m: Measure) -> Option<f64> {
        match m {
            Measure::R => self.r_ratio,
            Measure::K => self.schmidt_number,
            Measure::PE => self.phase_entanglement,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanResult {
    pub axes: Vec<(Axis, Vec<f64>)>,
    pub measures: Vec<Measure>,
    /// Row-major over the axes: the last axis varies fastest.
    pub points: Vec<ScanPoint>,
}

/// The report for one parameter point.
pub fn point_report(fixed: &ModelParams, r: f64, theta: f64, opts: &ReportOptions) -> Result<EntanglementReport> {
    let c = coherence_from_r_theta(r, theta)?;
    entanglement_report(fixed, &c, opts)
}

fn evaluate(spec: &ScanSpec, coords: &[f64]) -> ScanPoint {
    let mut m = spec.fixed;
    let (mut r, mut theta) = (spec.r, spec.theta);
    for (a, &v) in spec.axes.iter().zip(coords) {
        match a.axis {
            Axis::R => r = v,
            Axis::Theta => theta = v,
            Axis::Eta => m.eta = v,
            Axis::Delta => m.delta = v,
        }
    }
    let need_k = spec.measures.iter().any(|x| matches!(x, Measure::K | Measure::PE));
    let opts = ReportOptions { compute_k: need_k, ..spec.options };
    match point_report(&m, r, theta, &opts) {
        Ok(rep) => ScanPoint {
            coords: coords.to_vec(),
            r_ratio: Some(rep.r_ratio),
            schmidt_number: rep.schmidt_number,
            phase_entanglement: rep.phase_entanglement,
            dk0_used: Some(rep.dk0_used),
            failure: None,
        },
        Err(e) => ScanPoint {
            coords: coords.to_vec(),
            r_ratio: None,
            schmidt_number: None,
            phase_entanglement: None,
            dk0_used: None,
            failure: Some(e.to_string()),
        },
    }
}

/// Evaluate every lattice point in parallel; results come back in axis order
/// and do not depend on the number of worker threads.
pub fn run_scan(spec: &ScanSpec) -> Result<ScanResult> {
    spec.validate()?;
    let axes: Vec<(Axis, Vec<f64>)> = spec.axes.iter().map(|a| (a.axis, a.values())).collect();
    let coords: Vec<Vec<f64>> = match axes.as_slice() {
        [(_, xs)] => xs.iter().map(|&x| vec![x]).collect(),
        [(_, xs), (_, ys)] => xs.iter().flat_map(|&x| ys.iter().map(move |&y| vec![x, y])).collect(),
        _ => unreachable!("validated"),
    };
    let points = coords.par_iter().map(|c| evaluate(spec, c)).collect();
    Ok(ScanResult { axes, measures: spec.measures.clone(), points })
}

fn csv_reason(s: &str) -> String {
    s.chars().map(|c| if c == ',' || c == '\n' || c == '\r' { ';' } else { c }).collect()
}

impl ScanResult {
    pub fn failed(&self) -> usize {
        self.points.iter().filter(|p| p.failure.is_some()).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header: Vec<&str> = self.axes.iter().map(|(a, _)| a.name()).collect();
        header.extend(self.measures.iter().map(|m| m.name()));
        header.push("status");
        writeln!(out, "{}", header.join(","))?;
        for p in &self.points {
            let mut row: Vec<String> = p.coords.iter().map(|x| num(*x)).collect();
            for m in &self.measures {
                row.push(p.value(*m).map(num).unwrap_or_default());
            }
            row.push(match &p.failure {
                None => "ok".to_string(),
                Some(r) => format!("failed:{}", csv_reason(r)),
            });
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// (coordinate, value) pairs of one measure along a one-axis scan,
    /// skipping failed points.
    pub fn series(&self, m: Measure) -> Vec<(f64, f64)> {
        self.points.iter().filter_map(|p| p.value(m).map(|v| (p.coords[0], v))).collect()
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LorentzFit {
    pub center: f64,
    pub fwhm: f64,
    pub peak: f64,
    pub floor: f64,
    /// RMS residual relative to the fitted peak height.
    pub residual: f64,
}

fn lorentz(x: f64, b: &[f64; 4]) -> f64 {
    let z = 2.0 * (x - b[0]) / b[1];
    b[2] / (1.0 + z * z) + b[3]
}

fn solve4(mut a: [[f64; 4]; 4], mut r: [f64; 4]) -> Option<[f64; 4]> {
    for c in 0..4 {
        let p = (c..4).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        r.swap(c, p);
        for i in (c + 1)..4 {
            let f = a[i][c] / a[c][c];
            for j in c..4 {
                a[i][j] -= f * a[c][j];
            }
            r[i] -= f * r[c];
        }
    }
    let mut x = [0.0; 4];
    for c in (0..4).rev() {
        let s: f64 = ((c + 1)..4).map(|j| a[c][j] * x[j]).sum();
        x[c] = (r[c] - s) / a[c][c];
    }
    Some(x)
}

/// Least-squares fit of p/(1 + ((x−c)/(w/2))²) + floor by Levenberg–Marquardt,
/// started from the half-maximum crossings of the data.
pub fn lorentzian_fit(x: &[f64], y: &[f64]) -> Result<LorentzFit> {
    if x.len() != y.len() || x.len() < 7 {
        return Err(Error::FitRange(format!("need at least 7 points, got {}", x.len())));
    }
    let (imax, &ymax) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let half = ymin + 0.5 * (ymax - ymin);
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for i in range {
            if y[i] <= half {
                let t = (y[prev] - half) / (y[prev] - y[i]);
                return Some(x[prev] + t * (x[i] - x[prev]));
            }
            prev = i;
        }
        None
    };
    let left = cross(&mut (0..imax).rev());
    let right = cross(&mut ((imax + 1)..x.len()));
    let (left, right) = match (left, right) {
        (Some(l), Some(r)) => (l, r),
        _ => return Err(Error::FitRange("no half-maximum crossing on both sides of the peak".into())),
    };
    let mut b = [0.5 * (left + right), (right - left).abs(), ymax - ymin, ymin];
    let sse = |b: &[f64; 4]| -> f64 { x.iter().zip(y).map(|(&xi, &yi)| (yi - lorentz(xi, b)).powi(2)).sum() };
    let mut cost = sse(&b);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (&xi, &yi) in x.iter().zip(y) {
            let z = 2.0 * (xi - b[0]) / b[1];
            let l = 1.0 / (1.0 + z * z);
            let j = [b[2] * l * l * 4.0 * z / b[1], b[2] * l * l * 2.0 * z * z / b[1], l, 1.0];
            let r = yi - lorentz(xi, &b);
            for p in 0..4 {
                jtr[p] += j[p] * r;
                for q in 0..4 {
                    jtj[p][q] += j[p] * j[q];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj;
            for p in 0..4 {
                a[p][p] += lambda * jtj[p][p].max(1e-300);
            }
            let Some(step) = solve4(a, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [b[0] + step[0], b[1] + step[1], b[2] + step[2], b[3] + step[3]];
            let c = sse(&trial);
            if c.is_finite() && c <= cost && trial[1] > 0.0 {
                let rel = (cost - c) / cost.max(1e-300);
                b = trial;
                cost = c;
                lambda = (lambda * 0.1).max(1e-15);
                improved = rel > 1e-15;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let residual = (cost / x.len() as f64).sqrt() / b[2].abs().max(f64::MIN_POSITIVE);
    Ok(LorentzFit { center: b[0], fwhm: b[1].abs(), peak: b[2], floor: b[3], residual })
}

#[derive(Clone, Debug, Serialize)]
pub struct KrRow {
    pub eta: f64,
    pub delta: f64,
    pub k: Option<f64>,
    pub r: Option<f64>,
    pub r_over_2_2: Option<f64>,
    pub closed_form_k_max: f64,
    /// |K − R/2.2| / K.
    pub rel_dev: Option<f64>,
    pub failure: Option<String>,
}

/// K and R at dark coherence for each (η, δ) pair. Pairs outside
/// η/δ² ≥ 100, η ≤ 1 are flagged rather than computed.
pub fn kr_relation_scan(pairs: &[(f64, f64)], opts: &ReportOptions) -> Vec<KrRow> {
    pairs
        .par_iter()
        .map(|&(eta, delta)| {
            let mut row = KrRow {
                eta,
                delta,
                k: None,
                r: None,
                r_over_2_2: None,
                closed_form_k_max: closed_form_k_max(eta, delta),
                rel_dev: None,
                failure: None,
            };
            if !(eta / (delta * delta) >= 100.0 && eta <= 1.0) {
                row.failure = Some(format!("outside the K–R regime: eta/delta^2 = {} , eta = {eta}", eta / (delta * delta)));
                return row;
            }
            let res = ModelParams::new(delta, eta)
                .and_then(|m| point_report(&m, 0.0, std::f64::consts::PI, &ReportOptions { compute_k: true, ..*opts }));
            match res {
                Ok(rep) => {
                    let k = rep.schmidt_number.expect("requested");
                    row.k = Some(k);
                    row.r = Some(rep.r_ratio);
                    row.r_over_2_2 = Some(rep.r_ratio / 2.2);
                    row.rel_dev = Some((k - rep.r_ratio / 2.2).abs() / k);
                }
                Err(e) => row.failure = Some(e.to_string()),
            }
            row
        })
        .collect()
}

pub fn write_kr_csv<W: Write>(rows: &[KrRow], mut out: W) -> Result<()> {
    writeln!(out, "eta,delta,K,R,R_over_2.2,K_closed_form,rel_dev,status")?;
    for r in rows {
        let o = |v: Option<f64>| v.map(num).unwrap_or_default();
        let status = match &r.failure {
            None => "ok".to_string(),
            Some(s) => format!("failed:{}", csv_reason(s)),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            num(r.eta),
            num(r.delta),
            o(r.k),
            o(r.r),
            o(r.r_over_2_2),
            num(r.closed_form_k_max),
            o(r.rel_dev),
            status
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Case {
    pub model: ModelParams,
    pub r: f64,
    pub theta: f64,
}

impl Case {
    pub fn new(delta: f64, eta: f64, r: f64, theta: f64) -> Result<Self> {
        Ok(Case { model: ModelParams::new(delta, eta)?, r, theta })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseModes {
    pub case: Case,
    pub schmidt_number: f64,
    pub r_ratio: f64,
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub modes: Vec<Vec<C64>>,
    /// Second central moment of |ψ₁|² on the common axis.
    pub mode1_variance: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PairClaim {
    pub k_ratio: f64,
    pub r_ratio: f64,
    pub mode1_broader: bool,
    /// K′/K ∈ [0.9, 1.1], R′/R ∈ [0.24, 0.36] and a broader first mode.
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeReport {
    #[serde(skip)]
    pub q_nodes: Vec<f64>,
    pub a: CaseModes,
    pub b: CaseModes,
    pub claim: PairClaim,
}

fn case_modes(case: Case, n_modes: usize, q: &[f64], wq: &[f64], opts: &ReportOptions) -> Result<CaseModes> {
    let m = case.model;
    m.validate()?;
    let c = coherence_from_r_theta(case.r, case.theta)?;
    let rep = entanglement_report(&m, &c, &ReportOptions { compute_k: true, ..*opts })?;
    let s = SteadyState::exact(&m, &derived_coefficients(&m, &c)?);
    let kern = TimeKernel::build(&s, &opts.kernel)?;
    let (vals, vecs) = kern.top_modes(n_modes.max(1))?;
    let mut modes: Vec<Vec<C64>> = vals.iter().zip(&vecs).map(|(l, y)| kern.atom_mode(*l, y, q)).collect();
    for psi in modes.iter_mut() {
        if let Some(p) = psi.iter().copied().max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr())) {
            let r = p.conj() / p.norm();
            psi.iter_mut().for_each(|x| *x *= r);
        }
    }
    let dens: Vec<f64> = modes[0].iter().map(|z| z.norm_sqr()).collect();
    let mode1_variance = profile_variance(q, wq, &dens);
    modes.truncate(n_modes);
    Ok(CaseModes {
        case,
        schmidt_number: rep.schmidt_number.expect("requested"),
        r_ratio: rep.r_ratio,
        eigenvalues: vals[..n_modes.min(vals.len())].to_vec(),
        modes,
        mode1_variance,
    })
}

/// Leading atom modes of two configurations on a shared q axis with their
/// K and R, and the primed-versus-unprimed comparison.
pub fn schmidt_mode_report(a: Case, b: Case, n_modes: usize, q_points: usize, opts: &ReportOptions) -> Result<ModeReport> {
    let span = 5.0 * a.model.eta.max(b.model.eta);
    let q = uniform_nodes(-span, span, q_points.max(16));
    let wq = trapezoid_weights(&q);
    let (ra, rb) = rayon::join(|| case_modes(a, n_modes, &q, &wq, opts), || case_modes(b, n_modes, &q, &wq, opts));
    let (ca, cb) = (ra?, rb?);
    let k_ratio = cb.schmidt_number / ca.schmidt_number;
    let r_ratio = cb.r_ratio / ca.r_ratio;
    let mode1_broader = cb.mode1_variance > ca.mode1_variance;
    let holds = (0.9..=1.1).contains(&k_ratio) && (0.24..=0.36).contains(&r_ratio) && mode1_broader;
    Ok(ModeReport { q_nodes: q, a: ca, b: cb, claim: PairClaim { k_ratio, r_ratio, mode1_broader, holds } })
}

impl CaseModes {
    pub fn write_csv<W: Write>(&self, q: &[f64], mut out: W) -> Result<()> {
        writeln!(out, "mode_index,lambda,node,re_psi,im_psi")?;
        for (n, (l, psi)) in self.eigenvalues.iter().zip(&self.modes).enumerate() {
            for (x, v) in q.iter().zip(psi) {
                writeln!(out, "{},{},{},{},{}", n, num(*l), num(*x), num(v.re), num(v.im))?;
            }
        }
        Ok(())
    }
}

/// K and R at dark-coherence report settings, used by the single-point
/// consistency check of the scan.
pub fn single_point(spec: &ScanSpec) -> Result<EntanglementReport> {
    let need_k = spec.measures.iter().any(|x| matches!(x, Measure::K | Measure::PE));
    point_report(&spec.fixed, spec.r, spec.theta, &ReportOptions { compute_k: need_k, ..spec.options })
}

/// Default options for scans that only need R.
pub fn r_only() -> ReportOptions {
    ReportOptions { compute_k: false, dk0: Dk0Policy::AutoPeak, ..Default::default() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(axes: Vec<AxisSpec>, measures: Vec<Measure>, delta: f64, eta: f64) -> ScanSpec {
        ScanSpec { fixed: ModelParams::new(delta, eta).unwrap(), r: 0.0, theta: PI, axes, measures, options: ReportOptions::default() }
    }

    #[test]
    fn lorentzian_self_consistency() {
        let (c, w, p, f) = (0.3, 0.17, 12.0, 1.5);
        let x: Vec<f64> = (0..41).map(|i| -0.5 + i as f64 * 0.04).collect();
        let y: Vec<f64> = x.iter().map(|&x| lorentz(x, &[c, w, p, f])).collect();
        let fit = lorentzian_fit(&x, &y).unwrap();
        assert!((fit.center - c).abs() < 1e-6 && (fit.fwhm - w).abs() < 1e-6, "{fit:?}");
        assert!((fit.peak - p).abs() < 1e-6 && (fit.floor - f).abs() < 1e-6);
        assert!(fit.residual < 1e-8);
    }

    #[test]
    fn lorentzian_needs_half_max_crossings() {
        let x: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 10.0 - x).collect();
        assert!(matches!(lorentzian_fit(&x, &y), Err(Error::FitRange(_))));
        assert!(matches!(lorentzian_fit(&x[..5], &y[..5]), Err(Error::FitRange(_))));
    }

    #[test]
    fn one_point_scan_equals_report() {
        let s = spec(vec![AxisSpec { axis: Axis::R, min: 0.0, max: 0.0, count: 1 }], vec![Measure::R, Measure::K], 0.1, 0.5);
        let res = run_scan(&s).unwrap();
        let rep = single_point(&s).unwrap();
        assert_eq!(res.points[0].r_ratio, Some(rep.r_ratio));
        assert_eq!(res.points[0].schmidt_number, rep.schmidt_number);
    }

    #[test]
    fn scan_is_deterministic_and_thread_independent() {
        let s = spec(
            vec![AxisSpec { axis: Axis::R, min: -1.0, max: 1.0, count: 3 }, AxisSpec { axis: Axis::Theta, min: 0.0, max: 2.0 * PI, count: 5 }],
            vec![Measure::R],
            0.05,
            0.1,
        );
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let res = pool.install(|| run_scan(&s)).unwrap();
            let mut buf = Vec::new();
            res.write_csv(&mut buf).unwrap();
            buf
        };
        let a = run(1);
        assert_eq!(a, run(4));
        assert_eq!(a, run(4));
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("r,theta,R,status\n"));
        assert_eq!(text.lines().count(), 16);
    }

    #[test]
    fn surface_peaks_at_dark_coherence_and_is_symmetric() {
        let s = spec(
            vec![AxisSpec { axis: Axis::R, min: -2.0, max: 2.0, count: 9 }, AxisSpec { axis: Axis::Theta, min: 0.0, max: 2.0 * PI, count: 9 }],
            vec![Measure::R],
            0.02,
            0.1,
        );
        let res = run_scan(&s).unwrap();
        assert_eq!(res.failed(), 0);
        let best = res.points.iter().max_by(|a, b| a.r_ratio.unwrap().total_cmp(&b.r_ratio.unwrap())).unwrap();
        assert!(best.coords[0].abs() < 0.5 + 1e-12 && (best.coords[1] - PI).abs() < PI / 4.0 + 1e-12, "{:?}", best.coords);
        // R(r, 2π − θ) = R(r, θ).
        for i in 0..9 {
            for j in 0..9 {
                let a = res.points[i * 9 + j].r_ratio.unwrap();
                let b = res.points[i * 9 + (8 - j)].r_ratio.unwrap();
                assert!((a - b).abs() < 1e-6 * a.max(b), "{i},{j}: {a} {b}");
            }
        }
        // Along r = 0 the minimum sits at θ = 0 (or its image 2π).
        let row: Vec<f64> = (0..9).map(|j| res.points[4 * 9 + j].r_ratio.unwrap()).collect();
        let jmin = (0..9).min_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert!(jmin == 0 || jmin == 8, "{row:?}");
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = spec(vec![AxisSpec { axis: Axis::R, min: 0.0, max: 1.0, count: 2 }], vec![Measure::R], 0.1, 0.5);
        assert!(run_scan(&bad).is_err());
        let bad = spec(vec![AxisSpec { axis: Axis::Delta, min: 0.0, max: 1.0, count: 3 }], vec![Measure::R], 0.1, 0.5);
        assert!(run_scan(&bad).is_err());
        assert!("kappa".parse::<Axis>().is_err());
        assert!("X".parse::<Measure>().is_err());
    }

    #[test]
    fn failed_points_are_flagged_not_dropped() {
        let mut s = spec(vec![AxisSpec { axis: Axis::R, min: -1.0, max: 1.0, count: 3 }], vec![Measure::R], 0.1, 0.5);
        s.options.dk0 = Dk0Policy::Explicit(f64::NAN);
        let res = run_scan(&s).unwrap();
        assert_eq!(res.points.len(), 3);
        assert_eq!(res.failed(), 3);
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().skip(1).all(|l| l.contains(",failed:")));
    }

    #[test]
    fn kr_rows_flag_out_of_regime_pairs() {
        let rows = kr_relation_scan(&[(0.1, 0.1)], &ReportOptions::default());
        assert!(rows[0].failure.is_some());
        let rows = kr_relation_scan(&[(0.1, 0.02)], &ReportOptions::default());
        let r = &rows[0];
        assert!(r.failure.is_none(), "{:?}", r.failure);
        assert!(r.rel_dev.unwrap() < 0.1, "{r:?}");
    }

    #[test]
    fn identical_cases_give_identical_modes() {
        let c = Case::new(0.2, 0.5, 0.0, PI).unwrap();
        let rep = schmidt_mode_report(c, c, 3, 401, &ReportOptions::default()).unwrap();
        assert_eq!(rep.a.eigenvalues, rep.b.eigenvalues);
        for (x, y) in rep.a.modes.iter().zip(&rep.b.modes) {
            assert_eq!(x, y);
        }
        assert!(!rep.claim.mode1_broader);
    }
}
