use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Domain { field: &'static str, reason: String },

    #[error("degenerate coefficients: {0}")]
    Degenerate(String),

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("{what} = {value} lies outside [{lo}, {hi}]")]
    Range { what: &'static str, value: f64, lo: f64, hi: f64 },

    #[error("population trapping: delta = {delta} gives a dark superposition that never decays; no steady state exists")]
    Trapping { delta: f64 },

    #[error("step size dt = {dt} too large: need dt * max(1, delta) <= 0.1 (limit {limit})")]
    StepSize { dt: f64, limit: f64 },

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("backend disagreement: K_dense = {k_dense}, K_kernel = {k_kernel} (relative difference {rel:.3e})")]
    BackendDisagreement { k_dense: f64, k_kernel: f64, rel: f64 },

    #[error("fit range: {0}")]
    FitRange(String),

    #[error("{0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain { field, reason: reason.into() }
    }

    /// True for errors caused by the numerical method not reaching its
    /// target, as opposed to bad input.
    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            Error::Convergence(_) | Error::BackendDisagreement { .. } | Error::FitRange(_) | Error::DegenerateState(_)
        )
    }
}
