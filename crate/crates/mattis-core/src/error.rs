use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input violates a documented precondition (non-PSD matrix, bad path, ...).
    Validation(String),
    /// A tuning parameter is out of range (quadrature order, step sizes, ...).
    Config(String),
    /// The request exceeds a configured size limit.
    Capacity(String),
    /// The model cannot be handled by the requested component.
    Capability(String),
    /// An iteration exhausted its budget.
    NonConvergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },
    /// A numerical quality check failed.
    Numerical { context: String, trace: Vec<f64> },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, trace: Vec<f64>) -> Self {
        Error::Numerical {
            context: msg.into(),
            trace,
        }
    }

    /// Short machine-friendly name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Config(_) => "config",
            Error::Capacity(_) => "capacity",
            Error::Capability(_) => "capability",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Numerical { .. } => "numerical",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Validation(m) => write!(f, "invalid input: {m}"),
            Error::Config(m) => write!(f, "invalid configuration: {m}"),
            Error::Capacity(m) => write!(f, "capacity exceeded: {m}"),
            Error::Capability(m) => write!(f, "unsupported: {m}"),
            Error::NonConvergence {
                context,
                iterations,
                residual,
                ..
            } => write!(
                f,
                "{context} did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::Numerical { context, .. } => write!(f, "numerical failure: {context}"),
        }
    }
}

impl core::error::Error for Error {}
