use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("operation requires {expected} mode")]
    ModeMismatch { expected: &'static str },

    #[error("reservation wage {root} is not below the offer support bound {bound}")]
    ReservationOutOfSupport { root: f64, bound: f64 },

    #[error("no sign change for {what} on [{lo}, {hi}] (residuals {f_lo:e}, {f_hi:e})")]
    NoBracket {
        what: &'static str,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("quadrature failed to reach tolerance (error estimate {residual:e})")]
    Quadrature { residual: f64 },

    #[error("bracketing function has {sign_changes} sign changes at z = {z}")]
    NonUniqueRoot { z: f64, sign_changes: usize },

    #[error("consumption schedule is not strictly increasing near w = {w}")]
    NonMonotoneSchedule { w: f64 },

    #[error("budget equation is degenerate: {0}")]
    DegenerateBudget(String),

    #[error("config: {0}")]
    Config(String),

    #[error("at z = {z}: {source}")]
    AtGrid { z: f64, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at(self, z: f64) -> Self {
        match self {
            e @ Error::AtGrid { .. } => e,
            e => Error::AtGrid {
                z,
                source: Box::new(e),
            },
        }
    }

    /// Short machine-readable tag, used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::ModeMismatch { .. } => "mode_mismatch",
            Error::ReservationOutOfSupport { .. } => "reservation_out_of_support",
            Error::NoBracket { .. } => "no_bracket",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Quadrature { .. } => "quadrature",
            Error::NonUniqueRoot { .. } => "non_unique_root",
            Error::NonMonotoneSchedule { .. } => "non_monotone_schedule",
            Error::DegenerateBudget(_) => "degenerate_budget",
            Error::Config(_) => "config",
            Error::AtGrid { source, .. } => source.kind(),
        }
    }
}
