//! The figure datasets and their manifest.
//!
//! Every CSV here is a pure function of fixed parameters, so a re-run is
//! byte-identical. Only the runtimes in `manifest.json` change.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sgc_core::fmt::num;
use sgc_core::measures::{closed_form_fwhm, ReportOptions};
use sgc_core::model::ModelParams;
use sgc_core::scan::{kr_relation_scan, lorentzian_fit, r_only, run_scan, schmidt_mode_report, write_kr_csv, Axis, AxisSpec, Case, KrRow, Measure, ModeReport, ScanResult, ScanSpec};

use crate::CliResult;

pub const FIG2: (f64, f64) = (0.02, 0.1);
pub const FIG2_COUNT: usize = 25;
pub const FIG3_ETAS: [f64; 3] = [0.05, 0.1, 0.2];
pub const FIG3_DELTAS: [f64; 4] = [0.005, 0.01, 0.02, 0.03];
pub const FIG3_POINTS: usize = 41;
pub const FIG4: (f64, f64) = (0.04, 0.2);
pub const FIG4_POINTS: usize = 41;
/// (η, δ) pairs of the K–R comparison.
pub const FIG5_PAIRS: [(f64, f64); 8] = [(0.05, 0.01), (0.1, 0.02), (0.2, 0.03), (0.3, 0.04), (0.5, 0.05), (0.7, 0.04), (1.0, 0.05), (1.0, 0.08)];
pub const FIG6_MODES: usize = 3;
pub const FIG6_Q_POINTS: usize = 2001;

/// R over r ∈ [−3, 3] and θ ∈ [0, 2π] around the dark coherence.
pub fn fig2_surface() -> CliResult<ScanResult> {
    let (delta, eta) = FIG2;
    let spec = ScanSpec {
        fixed: ModelParams::new(delta, eta)?,
        r: 0.0,
        theta: PI,
        axes: vec![
            AxisSpec { axis: Axis::R, min: -3.0, max: 3.0, count: FIG2_COUNT },
            AxisSpec { axis: Axis::Theta, min: 0.0, max: 2.0 * PI, count: FIG2_COUNT },
        ],
        measures: vec![Measure::R],
        options: r_only(),
    };
    Ok(run_scan(&spec)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct FwhmRow {
    pub eta: f64,
    pub delta: f64,
    /// `theta` (r = 0) or `r` (θ = π).
    pub slice: &'static str,
    pub fwhm: Option<f64>,
    pub closed_form: f64,
    pub rel_err: Option<f64>,
    pub failure: Option<String>,
}

/// Cases with δ² ≤ 0.01 η, where the width law is expected to hold.
pub fn fig3_cases() -> Vec<(f64, f64)> {
    let mut v = Vec::new();
    for eta in FIG3_ETAS {
        for delta in FIG3_DELTAS {
            if delta * delta <= 0.01 * eta * (1.0 + 1e-12) {
                v.push((eta, delta));
            }
        }
    }
    v
}

/// Lorentzian fit of one R slice through the dark coherence.
pub fn fwhm_slice(eta: f64, delta: f64, axis: Axis) -> FwhmRow {
    let cf = closed_form_fwhm(eta, delta);
    let half = (10.0 * delta / eta).min(PI);
    let center = if axis == Axis::Theta { PI } else { 0.0 };
    let mut row = FwhmRow { eta, delta, slice: axis.name(), fwhm: None, closed_form: cf, rel_err: None, failure: None };
    let fit = ModelParams::new(delta, eta).and_then(|m| {
        let spec = ScanSpec {
            fixed: m,
            r: 0.0,
            theta: PI,
            axes: vec![AxisSpec { axis, min: center - half, max: center + half, count: FIG3_POINTS }],
            measures: vec![Measure::R],
            options: r_only(),
        };
        let res = run_scan(&spec)?;
        let (x, y): (Vec<f64>, Vec<f64>) = res.series(Measure::R).into_iter().unzip();
        lorentzian_fit(&x, &y)
    });
    match fit {
        Ok(f) => {
            row.fwhm = Some(f.fwhm);
            row.rel_err = Some((f.fwhm - cf).abs() / cf);
        }
        Err(e) => row.failure = Some(e.to_string()),
    }
    row
}

pub fn fig3_rows() -> Vec<FwhmRow> {
    fig3_cases().into_iter().flat_map(|(eta, delta)| [fwhm_slice(eta, delta, Axis::Theta), fwhm_slice(eta, delta, Axis::R)]).collect()
}

fn status(f: &Option<String>) -> String {
    match f {
        None => "ok".into(),
        Some(s) => format!("failed:{}", s.replace([',', '\n'], ";")),
    }
}

pub fn fig3_csv(rows: &[FwhmRow]) -> String {
    let o = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut s = String::from("eta,delta,slice,fwhm,fwhm_closed_form,rel_err,status\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{},{},{}\n", num(r.eta), num(r.delta), r.slice, o(r.fwhm), num(r.closed_form), o(r.rel_err), status(&r.failure)));
    }
    s
}

/// K, R and R/2.2 along θ at r = 0.
pub fn fig4_slice() -> CliResult<ScanResult> {
    let (delta, eta) = FIG4;
    let spec = ScanSpec {
        fixed: ModelParams::new(delta, eta)?,
        r: 0.0,
        theta: PI,
        axes: vec![AxisSpec { axis: Axis::Theta, min: 0.0, max: 2.0 * PI, count: FIG4_POINTS }],
        measures: vec![Measure::K, Measure::R, Measure::PE],
        options: ReportOptions::default(),
    };
    Ok(run_scan(&spec)?)
}

pub fn fig4_csv(res: &ScanResult) -> String {
    let o = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut s = String::from("theta,K,R,R_over_2.2,PE,status\n");
    for p in &res.points {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            num(p.coords[0]),
            o(p.schmidt_number),
            o(p.r_ratio),
            o(p.r_ratio.map(|r| r / 2.2)),
            o(p.phase_entanglement),
            status(&p.failure)
        ));
    }
    s
}

pub fn fig5_rows() -> Vec<KrRow> {
    kr_relation_scan(&FIG5_PAIRS, &ReportOptions::default())
}

/// The unprimed (δ=0.1, η=0.94, dark) and primed (δ=0.1, η=1, r=−0.4, θ=π) configurations.
pub fn fig6_cases() -> CliResult<(Case, Case)> {
    Ok((Case::new(0.1, 0.94, 0.0, PI)?, Case::new(0.1, 1.0, -0.4, PI)?))
}

pub fn fig6_modes() -> CliResult<ModeReport> {
    let (a, b) = fig6_cases()?;
    Ok(schmidt_mode_report(a, b, FIG6_MODES, FIG6_Q_POINTS, &ReportOptions::default())?)
}

#[derive(Clone, Debug, Serialize)]
pub struct DatasetEntry {
    pub name: &'static str,
    pub files: Vec<String>,
    pub parameters: Value,
    pub failed_rows: usize,
    pub runtime_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub generator: String,
    pub datasets: Vec<DatasetEntry>,
}

fn timed<T>(f: impl FnOnce() -> CliResult<T>) -> CliResult<(T, f64)> {
    let t0 = Instant::now();
    let v = f()?;
    Ok((v, t0.elapsed().as_secs_f64()))
}

/// Compute every dataset, then write them and `manifest.json` into `dir`.
pub fn write_bundle(dir: &Path, err: &mut dyn Write) -> CliResult<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut datasets = Vec::new();

    let (fig2, t) = timed(fig2_surface)?;
    let mut buf = Vec::new();
    fig2.write_csv(&mut buf)?;
    files.push(("fig2_surface.csv".into(), buf));
    datasets.push(DatasetEntry {
        name: "fig2_surface",
        files: vec!["fig2_surface.csv".into()],
        parameters: json!({"delta": FIG2.0, "eta": FIG2.1, "r": [-3.0, 3.0, FIG2_COUNT], "theta": [0.0, 2.0 * PI, FIG2_COUNT], "measures": ["R"]}),
        failed_rows: fig2.failed(),
        runtime_seconds: t,
    });

    let (fig3, t) = timed(|| Ok(fig3_rows()))?;
    files.push(("fig3_fwhm.csv".into(), fig3_csv(&fig3).into_bytes()));
    datasets.push(DatasetEntry {
        name: "fig3_fwhm",
        files: vec!["fig3_fwhm.csv".into()],
        parameters: json!({"cases": fig3_cases(), "points_per_slice": FIG3_POINTS, "half_span": "min(pi, 10 delta / eta)", "selection": "delta^2 <= 0.01 eta"}),
        failed_rows: fig3.iter().filter(|r| r.failure.is_some()).count(),
        runtime_seconds: t,
    });

    let (fig4, t) = timed(fig4_slice)?;
    files.push(("fig4_slices.csv".into(), fig4_csv(&fig4).into_bytes()));
    datasets.push(DatasetEntry {
        name: "fig4_slices",
        files: vec!["fig4_slices.csv".into()],
        parameters: json!({"delta": FIG4.0, "eta": FIG4.1, "r": 0.0, "theta": [0.0, 2.0 * PI, FIG4_POINTS]}),
        failed_rows: fig4.failed(),
        runtime_seconds: t,
    });

    let (fig5, t) = timed(|| Ok(fig5_rows()))?;
    let mut buf = Vec::new();
    write_kr_csv(&fig5, &mut buf)?;
    files.push(("fig5_kr.csv".into(), buf));
    datasets.push(DatasetEntry {
        name: "fig5_kr",
        files: vec!["fig5_kr.csv".into()],
        parameters: json!({"pairs_eta_delta": FIG5_PAIRS, "r": 0.0, "theta": PI}),
        failed_rows: fig5.iter().filter(|r| r.failure.is_some()).count(),
        runtime_seconds: t,
    });

    let (fig6, t) = timed(fig6_modes)?;
    for (name, m) in [("fig6_modes_a.csv", &fig6.a), ("fig6_modes_b.csv", &fig6.b)] {
        let mut buf = Vec::new();
        m.write_csv(&fig6.q_nodes, &mut buf)?;
        files.push((name.into(), buf));
    }
    datasets.push(DatasetEntry {
        name: "fig6_modes",
        files: vec!["fig6_modes_a.csv".into(), "fig6_modes_b.csv".into()],
        parameters: json!({"a": fig6.a.case, "b": fig6.b.case, "modes": FIG6_MODES, "q_points": FIG6_Q_POINTS, "claim": fig6.claim,
            "schmidt_numbers": [fig6.a.schmidt_number, fig6.b.schmidt_number], "r_ratios": [fig6.a.r_ratio, fig6.b.r_ratio]}),
        failed_rows: 0,
        runtime_seconds: t,
    });

    for (name, bytes) in &files {
        std::fs::write(dir.join(name), bytes)?;
    }
    let manifest = Manifest { generator: format!("sgc {}", env!("CARGO_PKG_VERSION")), datasets };
    let mut m = serde_json::to_vec_pretty(&manifest).expect("plain data serializes");
    m.push(b'\n');
    std::fs::write(dir.join("manifest.json"), m)?;
    for d in &manifest.datasets {
        writeln!(err, "{:<14} {:>8.2} s  {} failed rows", d.name, d.runtime_seconds, d.failed_rows)?;
    }
    Ok(manifest)
}
