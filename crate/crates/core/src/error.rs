use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid dimension {0}: need n >= 2")]
    InvalidDimension(usize),

    #[error("expected a {expected}-dimensional system, got n = {got}")]
    WrongDimension { expected: usize, got: usize },

    #[error("matrix {name} is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { name: String, asymmetry: f64 },

    #[error(
        "quadratic terms are not energy preserving: residual {residual:.3e} at (i,j,k) = ({}, {}, {})",
        .i + 1, .j + 1, .k + 1
    )]
    NotEnergyPreserving {
        i: usize,
        j: usize,
        k: usize,
        residual: f64,
    },

    #[error("Q matrices do not match the two-parameter family (mismatch {0:.3e})")]
    InconsistentParameterization(f64),

    #[error("nonlinearity is trivial (|q| = {0:.3e}); treat the system as linear")]
    TrivialNonlinearity(f64),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("{0} did not converge within {1} iterations")]
    MaxIterations(&'static str, usize),

    #[error("certificate lift is only defined for 3-dimensional systems (got n = {0})")]
    NotThreeDimensional(usize),

    #[error("unknown {kind} '{name}'")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch(format!(
            "{what} has length {got}, expected {expected}"
        )));
    }
    Ok(())
}
