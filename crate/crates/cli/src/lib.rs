//! The `sgc` command line: single-point reports, parameter scans, Schmidt
//! mode export, the dynamics cross-check and the figure bundle.
//!
//! Exit codes: 0 success, 1 invalid input, 2 convergence failure.

pub mod commands;
pub mod config;
pub mod figures;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::InputError;

#[derive(Debug)]
pub enum CliError {
    Input(InputError),
    Core(sgc_core::Error),
    /// The computation ran but did not meet its target.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Core(e) if e.is_convergence() => 2,
            CliError::Core(_) => 1,
            CliError::Failed(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(e) => e.fmt(f),
            CliError::Core(e) => e.fmt(f),
            CliError::Failed(s) => f.write_str(s),
        }
    }
}

impl From<InputError> for CliError {
    fn from(e: InputError) -> Self {
        CliError::Input(e)
    }
}

impl From<sgc_core::Error> for CliError {
    fn from(e: sgc_core::Error) -> Self {
        match e {
            sgc_core::Error::Domain { field, reason } => CliError::Input(config::field_err(field, reason)),
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(sgc_core::Error::Io(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "sgc", version, about = "Atom-photon momentum entanglement with spontaneously generated coherence")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every computing subcommand. Values stay strings here so
/// that parse errors name the field the same way config-file errors do.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<String>,
    #[arg(long = "gamma-ratio", allow_hyphen_values = true)]
    pub gamma_ratio: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,
    #[arg(long = "q-points")]
    pub q_points: Option<String>,
    #[arg(long = "k-points")]
    pub k_points: Option<String>,
    #[arg(long = "k-span")]
    pub k_span: Option<String>,
    #[arg(long = "q-span-factor")]
    pub q_span_factor: Option<String>,
    #[arg(long = "fine-window-points")]
    pub fine_window_points: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub dk0: Option<String>,
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub format: Option<String>,
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl CommonArgs {
    pub fn flags(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("delta", &self.delta),
            ("eta", &self.eta),
            ("epsilon", &self.epsilon),
            ("gamma_ratio", &self.gamma_ratio),
            ("r", &self.r),
            ("theta", &self.theta),
            ("grid.q_points", &self.q_points),
            ("grid.k_points", &self.k_points),
            ("grid.k_span", &self.k_span),
            ("grid.q_span_factor", &self.q_span_factor),
            ("grid.fine_window_points", &self.fine_window_points),
            ("dk0", &self.dk0),
            ("backend", &self.backend),
            ("out", &self.out),
            ("format", &self.format),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))).collect()
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Entanglement measures at one parameter point.
    Report {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep one or two of r, theta, eta, delta.
    Scan {
        #[command(flatten)]
        common: CommonArgs,
        /// Scan description: `axis = name, min, max, count` lines, a
        /// `measures = R, K, PE` line and optional fixed parameters.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Export Schmidt modes; `--out` is the file prefix.
    Modes {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of modes (0 writes the eigenvalue spectrum only).
        #[arg(long)]
        n: Option<String>,
        /// Second configuration, compared against the first.
        #[arg(long)]
        pair: Option<PathBuf>,
    },
    /// Integrate the amplitude equations and compare with the steady state.
    Dynamics {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dt: Option<String>,
        #[arg(long = "t-final")]
        t_final: Option<String>,
        #[arg(long = "record-interval")]
        record_interval: Option<String>,
        /// steady or literal.
        #[arg(long)]
        convention: Option<String>,
    },
    /// Regenerate every figure dataset into a directory.
    Figures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn set_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("SGC_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| config::field_err("SGC_THREADS", format!("`{v}` is not a positive integer")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    set_threads()?;
    match cli.cmd {
        Cmd::Report { common } => commands::report(&common, out),
        Cmd::Scan { common, spec } => commands::scan(&common, &spec, out, err),
        Cmd::Modes { common, n, pair } => commands::modes(&common, n.as_deref(), pair.as_deref(), err).map(|_| ()),
        Cmd::Dynamics { common, dt, t_final, record_interval, convention } => {
            let mut extra = BTreeMap::new();
            for (k, v) in [("dynamics.dt", dt), ("dynamics.t_final", t_final), ("dynamics.record_interval", record_interval), ("dynamics.convention", convention)] {
                if let Some(v) = v {
                    extra.insert(k.to_string(), v);
                }
            }
            commands::dynamics(&common, extra, out, err)
        }
        Cmd::Figures { out: dir } => figures::write_bundle(&dir, err).map(|_| ()),
    }
}

/// Run with explicit argument list and streams; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 1;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
