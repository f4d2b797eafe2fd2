//! Flat `key = value` configuration files and the resolved run settings.
//!
//! Every setting is looked up as: command-line flag, then config file, then
//! built-in default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sgc_core::measures::{Backend, Dk0Policy, ReportOptions};
use sgc_core::model::{coherence_from_r_theta, InitialCoherence, ModelParams};
use sgc_core::wavefunction::GridSpec;

/// Input problems: exit code 1.
#[derive(Debug, Clone, PartialEq)]
pub enum InputError {
    /// A value that failed to parse or validate.
    Field { field: String, reason: String },
    /// A malformed line in a config or scan file.
    Line { file: String, line: usize, reason: String },
    Usage(String),
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputError::Field { field, reason } => write!(f, "invalid {field}: {reason}"),
            InputError::Line { file, line, reason } => write!(f, "{file}:{line}: {reason}"),
            InputError::Usage(s) => f.write_str(s),
        }
    }
}

impl std::error::Error for InputError {}

pub fn field_err(field: &str, reason: impl Into<String>) -> InputError {
    InputError::Field { field: field.to_string(), reason: reason.into() }
}

/// One `key = value` file. Keys keep their line numbers for diagnostics.
#[derive(Debug, Clone, Default)]
pub struct KvFile {
    pub name: String,
    pub entries: Vec<(String, String, usize)>,
}

impl KvFile {
    /// `repeatable` keys may appear more than once; any other duplicate is an
    /// error. `allowed` restricts the key set.
    pub fn parse(name: &str, text: &str, allowed: &dyn Fn(&str) -> bool, repeatable: &[&str]) -> Result<Self, InputError> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |reason: String| InputError::Line { file: name.to_string(), line, reason };
            let Some((k, v)) = content.split_once('=') else {
                return Err(err(format!("expected `key = value`, got `{content}`")));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.') {
                return Err(err(format!("malformed key `{k}`")));
            }
            if v.is_empty() {
                return Err(err(format!("key `{k}` has no value")));
            }
            if !allowed(k) {
                return Err(err(format!("unknown key `{k}`")));
            }
            if !repeatable.contains(&k) && entries.iter().any(|e| e.0 == k) {
                return Err(err(format!("duplicate key `{k}`")));
            }
            entries.push((k.to_string(), v.to_string(), line));
        }
        Ok(KvFile { name: name.to_string(), entries })
    }

    pub fn read(path: &Path, allowed: &dyn Fn(&str) -> bool, repeatable: &[&str]) -> Result<Self, InputError> {
        let text = std::fs::read_to_string(path).map_err(|e| field_err("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&path.display().to_string(), &text, allowed, repeatable)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.0 == key).map(|e| e.1.as_str())
    }

    pub fn all(&self, key: &str) -> Vec<(&str, usize)> {
        self.entries.iter().filter(|e| e.0 == key).map(|e| (e.1.as_str(), e.2)).collect()
    }
}

pub fn parse_f64(field: &str, s: &str) -> Result<f64, InputError> {
    let v: f64 = s.trim().parse().map_err(|_| field_err(field, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(field_err(field, "must be finite"));
    }
    Ok(v)
}

/// Radians, or `pi` with an optional decimal multiplier: `pi`, `-pi`, `0.5pi`, `2*pi`.
pub fn parse_angle(field: &str, s: &str) -> Result<f64, InputError> {
    let t = s.trim().to_ascii_lowercase();
    if let Some(m) = t.strip_suffix("pi") {
        let m = m.trim().trim_end_matches('*').trim();
        let mult = match m {
            "" | "+" => 1.0,
            "-" => -1.0,
            _ => m.parse::<f64>().map_err(|_| field_err(field, format!("`{s}` is not an angle (use radians or a multiple of pi)")))?,
        };
        return Ok(mult * std::f64::consts::PI);
    }
    parse_f64(field, &t).map_err(|_| field_err(field, format!("`{s}` is not an angle (use radians or a multiple of pi)")))
}

pub fn parse_count(field: &str, s: &str) -> Result<usize, InputError> {
    s.trim().parse().map_err(|_| field_err(field, format!("`{s}` is not a non-negative integer")))
}

pub fn parse_dk0(s: &str) -> Result<Dk0Policy, InputError> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("auto") || t.eq_ignore_ascii_case("auto-peak") {
        Ok(Dk0Policy::AutoPeak)
    } else {
        Ok(Dk0Policy::Explicit(parse_f64("dk0", t).map_err(|_| field_err("dk0", format!("`{s}` is neither `auto` nor a number")))?))
    }
}

pub fn parse_backend(s: &str) -> Result<Backend, InputError> {
    s.trim().parse().map_err(|_| field_err("backend", format!("`{s}` is not one of dense, kernel, auto")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

pub fn parse_format(s: &str) -> Result<Format, InputError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(field_err("format", format!("`{s}` is not csv or json"))),
    }
}

/// Keys shared by every subcommand, with their command-line spelling.
pub const COMMON_KEYS: &[(&str, &str)] = &[
    ("delta", "--delta"),
    ("eta", "--eta"),
    ("epsilon", "--epsilon"),
    ("gamma_ratio", "--gamma-ratio"),
    ("r", "--r"),
    ("theta", "--theta"),
    ("grid.q_points", "--q-points"),
    ("grid.k_points", "--k-points"),
    ("grid.k_span", "--k-span"),
    ("grid.q_span_factor", "--q-span-factor"),
    ("grid.fine_window_points", "--fine-window-points"),
    ("dk0", "--dk0"),
    ("backend", "--backend"),
    ("out", "--out"),
    ("format", "--format"),
];

/// Subcommand-specific keys that may also appear in a config file.
pub const EXTRA_KEYS: &[&str] = &["modes.n", "dynamics.dt", "dynamics.t_final", "dynamics.record_interval", "dynamics.convention"];

pub fn is_config_key(k: &str) -> bool {
    COMMON_KEYS.iter().any(|(c, _)| *c == k) || EXTRA_KEYS.contains(&k)
}

/// Layered lookup: flags, then files in priority order, then fallbacks
/// supplied by the subcommand, then the built-in default.
#[derive(Debug, Clone, Default)]
pub struct Sources {
    pub flags: BTreeMap<String, String>,
    pub files: Vec<KvFile>,
    pub fallback: BTreeMap<String, String>,
}

impl Sources {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.flags
            .get(key)
            .map(String::as_str)
            .or_else(|| self.files.iter().find_map(|f| f.get(key)))
            .or_else(|| self.fallback.get(key).map(String::as_str))
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelParams,
    pub r: f64,
    pub theta: f64,
    pub coherence: InitialCoherence,
    pub grid: GridSpec,
    pub dk0: Dk0Policy,
    pub backend: Backend,
    pub out: Option<PathBuf>,
    pub format: Format,
}

fn opt<T>(src: &Sources, key: &str, parse: impl Fn(&str) -> Result<T, InputError>) -> Result<Option<T>, InputError> {
    src.get(key).map(parse).transpose()
}

fn core_err(e: sgc_core::Error) -> InputError {
    match e {
        sgc_core::Error::Domain { field, reason } => field_err(field, reason),
        other => InputError::Usage(other.to_string()),
    }
}

impl RunConfig {
    /// `format_default` differs per subcommand.
    pub fn resolve(src: &Sources, format_default: Format) -> Result<Self, InputError> {
        let delta = opt(src, "delta", |s| parse_f64("delta", s))?.ok_or_else(|| field_err("delta", "required (--delta or `delta =` in the config file)"))?;
        let eta = opt(src, "eta", |s| parse_f64("eta", s))?.ok_or_else(|| field_err("eta", "required (--eta or `eta =` in the config file)"))?;
        let epsilon = opt(src, "epsilon", |s| parse_f64("epsilon", s))?.unwrap_or(1.0);
        let gamma_ratio = opt(src, "gamma_ratio", |s| parse_f64("gamma_ratio", s))?.unwrap_or(1.0);
        let model = ModelParams { gamma_ratio, epsilon, delta, eta };
        model.validate().map_err(core_err)?;
        let r = opt(src, "r", |s| parse_f64("r", s))?.unwrap_or(0.0);
        let theta = opt(src, "theta", |s| parse_angle("theta", s))?.unwrap_or(std::f64::consts::PI);
        let coherence = coherence_from_r_theta(r, theta).map_err(core_err)?;

        let d = GridSpec::default();
        let grid = GridSpec {
            q_points: opt(src, "grid.q_points", |s| parse_count("q_points", s))?.or(d.q_points),
            k_points: opt(src, "grid.k_points", |s| parse_count("k_points", s))?.unwrap_or(d.k_points),
            k_span: opt(src, "grid.k_span", |s| parse_f64("k_span", s))?.unwrap_or(d.k_span),
            q_span_factor: opt(src, "grid.q_span_factor", |s| parse_f64("q_span_factor", s))?.unwrap_or(d.q_span_factor),
            fine_window_points: opt(src, "grid.fine_window_points", |s| parse_count("fine_window_points", s))?.unwrap_or(d.fine_window_points),
            ..d
        };
        grid.validate().map_err(core_err)?;
        Ok(RunConfig {
            model,
            r,
            theta,
            coherence,
            grid,
            dk0: opt(src, "dk0", parse_dk0)?.unwrap_or(Dk0Policy::AutoPeak),
            backend: opt(src, "backend", parse_backend)?.unwrap_or(Backend::Auto),
            out: src.get("out").map(PathBuf::from),
            format: opt(src, "format", parse_format)?.unwrap_or(format_default),
        })
    }

    pub fn report_options(&self) -> ReportOptions {
        ReportOptions { backend: self.backend, dk0: self.dk0, grid: self.grid, ..Default::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn file(text: &str) -> KvFile {
        KvFile::parse("test.cfg", text, &is_config_key, &[]).unwrap()
    }

    fn sources(flags: &[(&str, &str)], text: &str) -> Sources {
        Sources { flags: flags.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(), files: vec![file(text)], ..Default::default() }
    }

    #[test]
    fn angles() {
        assert_eq!(parse_angle("theta", "pi").unwrap(), PI);
        assert_eq!(parse_angle("theta", "-pi").unwrap(), -PI);
        assert_eq!(parse_angle("theta", "0.5pi").unwrap(), 0.5 * PI);
        assert_eq!(parse_angle("theta", "2*pi").unwrap(), 2.0 * PI);
        assert_eq!(parse_angle("theta", "1.25").unwrap(), 1.25);
        assert!(parse_angle("theta", "tau").is_err());
        assert!(parse_angle("theta", "xpi").is_err());
    }

    #[test]
    fn file_errors_carry_line_numbers() {
        let e = KvFile::parse("a.cfg", "delta = 0.1\n# c\n\neta 0.3\n", &is_config_key, &[]).unwrap_err();
        assert_eq!(e, InputError::Line { file: "a.cfg".into(), line: 4, reason: "expected `key = value`, got `eta 0.3`".into() });
        let e = KvFile::parse("a.cfg", "delta = 0.1\nbogus = 2\n", &is_config_key, &[]).unwrap_err();
        assert!(matches!(e, InputError::Line { line: 2, .. }));
        let e = KvFile::parse("a.cfg", "delta = 0.1\ndelta = 0.2\n", &is_config_key, &[]).unwrap_err();
        assert!(matches!(e, InputError::Line { line: 2, .. }));
        let f = file("delta = 0.1 # trailing comment\ngrid.k_span=30\n");
        assert_eq!(f.get("delta"), Some("0.1"));
        assert_eq!(f.get("grid.k_span"), Some("30"));
    }

    #[test]
    fn missing_required_fields_are_named() {
        let e = RunConfig::resolve(&sources(&[("eta", "0.3")], ""), Format::Json).unwrap_err();
        assert!(matches!(&e, InputError::Field { field, .. } if field == "delta"), "{e}");
        let e = RunConfig::resolve(&sources(&[("delta", "0.3")], ""), Format::Json).unwrap_err();
        assert!(matches!(&e, InputError::Field { field, .. } if field == "eta"), "{e}");
        let e = RunConfig::resolve(&sources(&[("delta", "0.3"), ("eta", "-1")], ""), Format::Json).unwrap_err();
        assert!(matches!(&e, InputError::Field { field, .. } if field == "eta"), "{e}");
        let e = RunConfig::resolve(&sources(&[("delta", "0.3"), ("eta", "0.3"), ("grid.k_span", "5")], ""), Format::Json).unwrap_err();
        assert!(matches!(&e, InputError::Field { field, .. } if field == "k_span"), "{e}");
    }

    /// For each key: the default, then a file value over the default, then a
    /// flag over the file value.
    #[test]
    fn precedence_per_key() {
        type Get = fn(&RunConfig) -> String;
        let cases: &[(&str, &str, &str, Option<&str>, Get)] = &[
            ("delta", "0.2", "0.3", None, |c| c.model.delta.to_string()),
            ("eta", "0.4", "0.5", None, |c| c.model.eta.to_string()),
            ("epsilon", "0.8", "0.9", Some("1"), |c| c.model.epsilon.to_string()),
            ("gamma_ratio", "0.7", "1.5", Some("1"), |c| c.model.gamma_ratio.to_string()),
            ("r", "0.25", "-0.5", Some("0"), |c| c.r.to_string()),
            ("theta", "1.5", "2.5", Some("3.141592653589793"), |c| c.theta.to_string()),
            ("grid.q_points", "101", "201", Some("-"), |c| c.grid.q_points.map(|n| n.to_string()).unwrap_or("-".into())),
            ("grid.k_points", "301", "401", Some("801"), |c| c.grid.k_points.to_string()),
            ("grid.k_span", "25", "30", Some("40"), |c| c.grid.k_span.to_string()),
            ("grid.q_span_factor", "4.5", "6", Some("5"), |c| c.grid.q_span_factor.to_string()),
            ("grid.fine_window_points", "32", "48", Some("64"), |c| c.grid.fine_window_points.to_string()),
            ("dk0", "0.1", "0.2", Some("auto"), |c| match c.dk0 {
                Dk0Policy::AutoPeak => "auto".into(),
                Dk0Policy::Explicit(x) => x.to_string(),
            }),
            ("backend", "dense", "kernel", Some("auto"), |c| format!("{:?}", c.backend).to_lowercase()),
            ("out", "a.json", "b.json", Some("-"), |c| c.out.as_ref().map(|p| p.display().to_string()).unwrap_or("-".into())),
            ("format", "csv", "json", Some("json"), |c| format!("{:?}", c.format).to_lowercase()),
        ];
        assert_eq!(cases.len(), COMMON_KEYS.len());
        for (key, file_v, flag_v, default, get) in cases {
            let mut flags: Vec<(&str, &str)> = [("delta", "0.1"), ("eta", "0.3")].into_iter().filter(|(k, _)| k != key).collect();
            if let Some(d) = default {
                let c = RunConfig::resolve(&sources(&flags, ""), Format::Json).unwrap();
                assert_eq!(get(&c), *d, "default of {key}");
            }
            let text = format!("{key} = {file_v}\n");
            let c = RunConfig::resolve(&sources(&flags, &text), Format::Json).unwrap();
            assert_eq!(get(&c), *file_v, "file over default for {key}");
            flags.push((key, flag_v));
            let c = RunConfig::resolve(&sources(&flags, &text), Format::Json).unwrap();
            assert_eq!(get(&c), *flag_v, "flag over file for {key}");
        }
    }

    #[test]
    fn earlier_files_win() {
        let mut src = sources(&[("eta", "0.3")], "delta = 0.2\n");
        src.files.push(file("delta = 0.5\nepsilon = 0.5\n"));
        src.fallback.insert("delta".into(), "0.9".into());
        let c = RunConfig::resolve(&src, Format::Json).unwrap();
        assert_eq!((c.model.delta, c.model.epsilon), (0.2, 0.5));
        src.files.clear();
        assert_eq!(RunConfig::resolve(&src, Format::Json).unwrap().model.delta, 0.9);
    }
}
