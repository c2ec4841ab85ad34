use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A value violated a documented precondition.
    #[error("invalid {name}: {reason}")]
    InvalidInput { name: &'static str, reason: String },

    /// Distance outside the range where a pair-potential dataset is valid.
    #[error("distance {r_um:.4} um outside dataset range [{min_um:.4}, {max_um:.4}] um")]
    OutOfRange { r_um: f64, min_um: f64, max_um: f64 },

    /// The Lindblad generator has more than one steady state.
    #[error("steady state is not unique ({null_dim} zero modes)")]
    NonUniqueSteadyState { null_dim: usize },

    /// Linear system could not be solved (singular or ill-conditioned).
    #[error("singular system: {0}")]
    Singular(String),

    /// A numerical routine produced a result that fails its own checks.
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::invalid(name, format!("must be finite, got {value}")))
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<f64> {
    ensure_finite(name, value)?;
    if value > 0.0 {
        Ok(value)
    } else {
        Err(Error::invalid(name, format!("must be > 0, got {value}")))
    }
}

pub(crate) fn ensure_probability(name: &'static str, value: f64) -> Result<f64> {
    ensure_finite(name, value)?;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::invalid(name, format!("must lie in [0, 1], got {value}")))
    }
}
