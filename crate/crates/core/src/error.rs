use thiserror::Error;

/// Errors raised by the simulation engines and the configuration layer.
#[derive(Debug, Error)]
pub enum RatchetError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("norm drift {drift:.3e} after kick {kick} exceeds {limit:.0e}")]
    NormDrift { kick: usize, drift: f64, limit: f64 },

    #[error("truncation breach after kick {kick}: {leaked:.3e} probability in the outer quarter of the basis")]
    TruncationBreach { kick: usize, leaked: f64 },

    #[error("field window of {window_m} m is not an integer number of mirror periods ({period_m} m)")]
    Incommensurate { window_m: f64, period_m: f64 },

    #[error("no constant-gradient region of at least {min_samples} samples on the mirror")]
    RegionTooSmall { min_samples: usize },

    #[error("config: {0}")]
    Config(#[from] ConfigError),

    #[error("malformed {what} at line {line}: {reason}")]
    Parse {
        what: &'static str,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RatchetError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        RatchetError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures detected while integrating (norm drift, truncation).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            RatchetError::NormDrift { .. } | RatchetError::TruncationBreach { .. }
        )
    }

    /// True for failures caused by bad input rather than by the computation.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            RatchetError::InvalidParameter { .. }
                | RatchetError::Config(_)
                | RatchetError::Incommensurate { .. }
                | RatchetError::RegionTooSmall { .. }
        )
    }
}

/// Configuration errors always name the offending key.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("exactly one of `hbar` or `distance` may be given")]
    ConflictingHbar,
    #[error("line {0} is not of the form key=value")]
    Malformed(usize),
}

pub type Result<T, E = RatchetError> = std::result::Result<T, E>;
