//! Subcommand bodies. Each computes first and writes its output in one go
//! at the end.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sgc_core::dynamics::{integrate_to_steady, ConvergenceRow, DetuningConvention, IntegratorConfig};
use sgc_core::fmt::num;
use sgc_core::measures::{entanglement_report, schmidt_decompose, EntanglementReport, SchmidtOptions, Truncation};
use sgc_core::model::derived_coefficients;
use sgc_core::scan::{run_scan, schmidt_mode_report, Axis, AxisSpec, Case, Measure, ScanResult, ScanSpec};
use sgc_core::wavefunction::{normalize, MomentumGrid, SteadyState, WavefunctionGrid};

use crate::config::{field_err, is_config_key, parse_angle, parse_count, parse_f64, Format, InputError, KvFile, RunConfig, Sources};
use crate::{CliError, CliResult, CommonArgs};

/// Largest final L2 distance the dynamics check accepts.
pub const DYNAMICS_TOL: f64 = 1e-3;

fn base_sources(common: &CommonArgs, files: Vec<KvFile>) -> CliResult<Sources> {
    let mut files = files;
    if let Some(p) = &common.config {
        files.push(KvFile::read(p, &is_config_key, &[])?);
    }
    Ok(Sources { flags: common.flags(), files, fallback: BTreeMap::new() })
}

fn emit(path: Option<&Path>, bytes: &[u8], out: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => out.write_all(bytes)?,
    }
    Ok(())
}

fn json<T: Serialize>(x: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(x).expect("plain data serializes");
    v.push(b'\n');
    v
}

pub const REPORT_CSV_HEADER: &str =
    "var_single,var_cond,dk0_used,r_ratio,schmidt_number,phase_entanglement,closed_form_r_max,closed_form_k_max,k_backend,oracle_schmidt_number,oracle_rel_diff";

pub fn report_csv(rep: &EntanglementReport) -> String {
    let o = |v: Option<f64>| v.map(num).unwrap_or_default();
    let p = &rep.provenance;
    format!(
        "{REPORT_CSV_HEADER}\n{},{},{},{},{},{},{},{},{},{},{}\n",
        num(rep.var_single),
        num(rep.var_cond),
        num(rep.dk0_used),
        num(rep.r_ratio),
        o(rep.schmidt_number),
        o(rep.phase_entanglement),
        o(rep.closed_form_r_max),
        o(rep.closed_form_k_max),
        p.k_backend.unwrap_or(""),
        o(p.oracle_schmidt_number),
        o(p.oracle_rel_diff),
    )
}

pub fn compute_report(cfg: &RunConfig) -> CliResult<EntanglementReport> {
    Ok(entanglement_report(&cfg.model, &cfg.coherence, &cfg.report_options())?)
}

pub fn report(common: &CommonArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = RunConfig::resolve(&base_sources(common, vec![])?, Format::Json)?;
    let rep = compute_report(&cfg)?;
    let bytes = match cfg.format {
        Format::Json => json(&rep),
        Format::Csv => report_csv(&rep).into_bytes(),
    };
    emit(cfg.out.as_deref(), &bytes, out)
}

fn is_scan_key(k: &str) -> bool {
    k == "axis" || k == "measures" || is_config_key(k)
}

/// Axes and measures of a scan file. Everything else in the file is an
/// ordinary config key.
pub fn parse_scan_file(f: &KvFile) -> Result<(Vec<AxisSpec>, Vec<Measure>), InputError> {
    let line_err = |line: usize, reason: String| InputError::Line { file: f.name.clone(), line, reason };
    let mut axes = Vec::new();
    for (v, line) in f.all("axis") {
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        let [name, lo, hi, count] = parts[..] else {
            return Err(line_err(line, format!("axis needs `name, min, max, count`, got `{v}`")));
        };
        let axis: Axis = name.parse().map_err(|e: sgc_core::Error| line_err(line, e.to_string()))?;
        let bound = |s: &str| parse_angle(axis.name(), s).map_err(|e| line_err(line, e.to_string()));
        let count = parse_count("count", count).map_err(|e| line_err(line, e.to_string()))?;
        axes.push(AxisSpec { axis, min: bound(lo)?, max: bound(hi)?, count });
    }
    if axes.is_empty() {
        return Err(field_err("axis", format!("{} declares no `axis = name, min, max, count` line", f.name)));
    }
    let measures = match f.all("measures").first() {
        None => vec![Measure::R],
        Some((v, line)) => v
            .split(',')
            .map(|m| m.trim().parse::<Measure>().map_err(|e| line_err(*line, e.to_string())))
            .collect::<Result<_, _>>()?,
    };
    Ok((axes, measures))
}

/// Resolve a scan from flags, the scan file and the config file.
pub fn scan_spec(common: &CommonArgs, spec_path: &Path) -> CliResult<(ScanSpec, RunConfig)> {
    let file = KvFile::read(spec_path, &is_scan_key, &["axis"])?;
    let (axes, measures) = parse_scan_file(&file)?;
    let mut src = base_sources(common, vec![file])?;
    // A swept delta or eta needs no fixed value.
    for a in &axes {
        if matches!(a.axis, Axis::Delta | Axis::Eta) {
            src.fallback.insert(a.axis.name().to_string(), num(a.min));
        }
    }
    let cfg = RunConfig::resolve(&src, Format::Csv)?;
    let spec = ScanSpec { fixed: cfg.model, r: cfg.r, theta: cfg.theta, axes, measures, options: cfg.report_options() };
    spec.validate()?;
    Ok((spec, cfg))
}

pub fn scan_bytes(res: &ScanResult, format: Format) -> CliResult<Vec<u8>> {
    Ok(match format {
        Format::Json => json(res),
        Format::Csv => {
            let mut buf = Vec::new();
            res.write_csv(&mut buf)?;
            buf
        }
    })
}

pub fn scan(common: &CommonArgs, spec_path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let (spec, cfg) = scan_spec(common, spec_path)?;
    let res = run_scan(&spec)?;
    let failed = res.failed();
    if failed == res.points.len() {
        let why = res.points.first().and_then(|p| p.failure.clone()).unwrap_or_default();
        return Err(CliError::Failed(format!("every scan point failed; first: {why}")));
    }
    if failed > 0 {
        writeln!(err, "warning: {failed} of {} scan points failed and are flagged in the status column", res.points.len())?;
    }
    emit(cfg.out.as_deref(), &scan_bytes(&res, cfg.format)?, out)
}

#[derive(Serialize)]
struct ModesSummary {
    schmidt_number: f64,
    backend: &'static str,
    truncation: Truncation,
    eigenvalues: Vec<f64>,
    modes_written: usize,
}

fn prefixed(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}_{suffix}"))
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> sgc_core::Result<()>) -> CliResult<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Modes of one configuration, or of a pair when `pair` names a second
/// config file. Returns the paths written.
pub fn modes(common: &CommonArgs, n: Option<&str>, pair: Option<&Path>, err: &mut dyn Write) -> CliResult<Vec<PathBuf>> {
    let src = base_sources(common, vec![])?;
    let cfg = RunConfig::resolve(&src, Format::Csv)?;
    let n = match n.or(src.get("modes.n")) {
        Some(s) => parse_count("n", s)?,
        None => 3,
    };
    let prefix = cfg.out.as_ref().ok_or_else(|| field_err("out", "modes needs --out as the output file prefix"))?.display().to_string();

    if let Some(p) = pair {
        let other = Sources { files: vec![KvFile::read(p, &is_config_key, &[])?], ..Default::default() };
        let b = RunConfig::resolve(&other, Format::Csv)?;
        let ca = Case { model: cfg.model, r: cfg.r, theta: cfg.theta };
        let cb = Case { model: b.model, r: b.r, theta: b.theta };
        let q_points = cfg.grid.q_points.unwrap_or(2001);
        let rep = schmidt_mode_report(ca, cb, n, q_points, &cfg.report_options())?;
        let paths = [prefixed(&prefix, "a.csv"), prefixed(&prefix, "b.csv"), prefixed(&prefix, "summary.json")];
        write_file(&paths[0], |buf| rep.a.write_csv(&rep.q_nodes, buf))?;
        write_file(&paths[1], |buf| rep.b.write_csv(&rep.q_nodes, buf))?;
        std::fs::write(&paths[2], json(&rep))?;
        return Ok(paths.to_vec());
    }

    let d = derived_coefficients(&cfg.model, &cfg.coherence)?;
    let s = SteadyState::exact(&cfg.model, &d);
    let grid = MomentumGrid::for_state(&s, &cfg.grid)?;
    let w = normalize(&WavefunctionGrid::sample(&s, &grid))?;
    let so = SchmidtOptions { n_modes: if n == 0 { 64 } else { n }, ..Default::default() };
    let res = schmidt_decompose(&w, cfg.backend, &so)?;
    let available = res.atom_modes.len();
    let written = if n > available {
        writeln!(err, "warning: {n} modes requested but only {available} are retained; writing {available}")?;
        available
    } else {
        n
    };
    let summary = ModesSummary {
        schmidt_number: res.schmidt_number,
        backend: res.backend.label(),
        truncation: res.truncation,
        eigenvalues: res.eigenvalues.clone(),
        modes_written: written,
    };
    let mut paths = Vec::new();
    if n == 0 {
        let path = prefixed(&prefix, "spectrum.csv");
        let mut text = String::from("index,lambda\n");
        for (i, l) in res.eigenvalues.iter().enumerate() {
            text.push_str(&format!("{i},{}\n", num(*l)));
        }
        std::fs::write(&path, text)?;
        paths.push(path);
    } else {
        let (pa, pp) = (prefixed(&prefix, "atom.csv"), prefixed(&prefix, "photon.csv"));
        write_file(&pa, |buf| res.write_atom_csv(buf, written))?;
        write_file(&pp, |buf| res.write_photon_csv(buf, written))?;
        paths.extend([pa, pp]);
    }
    let ps = prefixed(&prefix, "summary.json");
    std::fs::write(&ps, json(&summary))?;
    paths.push(ps);
    Ok(paths)
}

fn parse_convention(s: &str) -> Result<DetuningConvention, InputError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "steady" => Ok(DetuningConvention::Steady),
        "literal" => Ok(DetuningConvention::Literal),
        _ => Err(field_err("convention", format!("`{s}` is not steady or literal"))),
    }
}

pub fn dynamics_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("tau,excited_population,l2_distance_to_analytic\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", num(r.tau), num(r.excited_population), num(r.l2_distance_to_analytic)));
    }
    s
}

/// Coarse grid unless the grid keys are given: 64 q nodes over ±5η and
/// 256 k nodes over ±20.
pub fn dynamics_grid(src: &Sources, cfg: &RunConfig) -> CliResult<MomentumGrid> {
    let nq = cfg.grid.q_points.unwrap_or(64);
    let nk = if src.get("grid.k_points").is_some() { cfg.grid.k_points } else { 256 };
    let span = if src.get("grid.k_span").is_some() { cfg.grid.k_span } else { 20.0 };
    Ok(MomentumGrid::uniform(cfg.model.eta, cfg.grid.q_span_factor, nq, span, nk)?)
}

pub fn dynamics(common: &CommonArgs, extra: BTreeMap<String, String>, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let mut src = base_sources(common, vec![])?;
    src.flags.extend(extra);
    // δ = 0 is a valid physical question with no steady state; say so
    // instead of the generic positivity message.
    if let Some(d) = src.get("delta") {
        if parse_f64("delta", d)? == 0.0 {
            return Err(CliError::Core(sgc_core::Error::Trapping { delta: 0.0 }));
        }
    }
    let cfg = RunConfig::resolve(&src, Format::Csv)?;
    let mut ic = IntegratorConfig::default_for(&cfg.model, &cfg.coherence)?;
    if let Some(v) = src.get("dynamics.dt") {
        ic.dt = parse_f64("dt", v)?;
    }
    if let Some(v) = src.get("dynamics.t_final") {
        ic.t_final = parse_f64("t_final", v)?;
        ic.record_interval = ic.t_final / 50.0;
    }
    if let Some(v) = src.get("dynamics.record_interval") {
        ic.record_interval = parse_f64("record_interval", v)?;
    }
    if let Some(v) = src.get("dynamics.convention") {
        ic.convention = parse_convention(v)?;
    }
    let grid = dynamics_grid(&src, &cfg)?;
    let run = integrate_to_steady(&cfg.model, &cfg.coherence, &grid, &ic)?;
    emit(cfg.out.as_deref(), dynamics_csv(&run.table).as_bytes(), out)?;
    let last = run.table.last().map(|r| r.l2_distance_to_analytic).unwrap_or(f64::NAN);
    if !(last < DYNAMICS_TOL) {
        return Err(CliError::Failed(format!("final L2 distance {last:.3e} to the steady state exceeds {DYNAMICS_TOL:e}")));
    }
    writeln!(err, "final L2 distance {last:.3e} at tau = {}", run.state.tau)?;
    Ok(())
}
