use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("time {t} s is outside the trajectory window [0, {duration}] s")]
    OutOfRange { t: f64, duration: f64 },

    #[error("invalid configuration at `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("target filter has not received a measurement yet")]
    Uninitialized,

    /// The recovery pose needs more backoff than `d_max` allows.
    #[error("recovery pose needs {required:.3} m of backoff, more than d_max")]
    BackoffExceedsDmax { required: f64 },

    #[error("recovery pose does not see the whole reach box")]
    VerificationFailed,

    #[error("no tracking segment decays for at least {min_len} s")]
    NoQualifyingSegment { min_len: f64 },

    #[error("trace has no complete recovery episode")]
    NoCompleteEpisode,

    #[error("trace must start in tracking mode")]
    StartsInRecovery,

    #[error("trace is empty")]
    EmptyTrace,

    #[error("{0}")]
    Domain(&'static str),
}

impl Error {
    pub(crate) fn config(field: &str, reason: &str) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
