use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Physics-level outcomes that are ordinary results (a single-framework
/// violation, an uncolorable valuation problem) are returned as values, not
/// as errors. The variants here are refusals: the requested computation is
/// not meaningful for the given input.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("capacity exceeded: {what} needs {requested}, limit is {limit}")]
    Capacity {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NonConvergence { sweeps: usize, off_norm: f64 },

    #[error("ambiguous spectrum: eigenvalues {low} and {high} are {gap:e} apart")]
    AmbiguousSpectrum { low: f64, high: f64, gap: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("incompatible operators: [{first}, {second}] has norm {commutator_norm:e}")]
    Incompatible {
        first: String,
        second: String,
        commutator_norm: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("inconsistent family: max off-diagonal decoherence {max_off_diagonal:e}")]
    Inconsistent { max_off_diagonal: f64 },
}

/// Coarse classification used to map errors onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The input describes a physically forbidden combination.
    Physics,
    Validation,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Incompatible { .. } | Error::Inconsistent { .. } => ErrorClass::Physics,
            Error::Validation(_) | Error::Degenerate(_) => ErrorClass::Validation,
            Error::Capacity { .. }
            | Error::NonConvergence { .. }
            | Error::AmbiguousSpectrum { .. }
            | Error::Numeric(_) => ErrorClass::Numeric,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
