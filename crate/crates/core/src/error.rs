use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Coarse classification used by front-ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed parameters or inconsistent dimensions.
    Config,
    /// A well-formed request outside the mathematical domain (u ≤ e, energy ≥ 1, ...).
    Domain,
    /// The numerics failed: blow-up, rank deficiency.
    Numerical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Scale functions need `u > e` so that `log log u > 0`.
    ScaleOutOfDomain {
        u: f64,
    },
    /// The requested scale needs path data beyond the sampled horizon.
    ScaleExceedsHorizon {
        u: f64,
        horizon: f64,
    },
    InvalidParameter {
        name: &'static str,
        reason: String,
    },
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A state coordinate became non-finite or exceeded the blow-up guard.
    BlowUp {
        time: f64,
        scale: Option<f64>,
    },
    /// The diffusion matrix lost full row rank along the target path.
    RankDeficient {
        time: f64,
        sigma_min: f64,
    },
    /// A sup-norm bound was requested from a field declared unbounded.
    UnboundedFields,
    /// A recurrence target lies outside the open energy ball.
    TargetEnergy {
        index: usize,
        energy: f64,
    },
    /// An error raised while processing one seed of a multi-seed run.
    InSeed {
        seed: u64,
        index: Option<usize>,
        source: Box<Error>,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter { .. } | Error::DimensionMismatch { .. } => ErrorClass::Config,
            Error::ScaleOutOfDomain { .. }
            | Error::ScaleExceedsHorizon { .. }
            | Error::UnboundedFields
            | Error::TargetEnergy { .. } => ErrorClass::Domain,
            Error::BlowUp { .. } | Error::RankDeficient { .. } => ErrorClass::Numerical,
            Error::InSeed { source, .. } => source.class(),
        }
    }

    /// Attaches seed provenance unless the error already carries it.
    pub fn in_seed(self, seed: u64, index: Option<usize>) -> Self {
        match self {
            tagged @ Error::InSeed { .. } => tagged,
            other => Error::InSeed {
                seed,
                index,
                source: Box::new(other),
            },
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ScaleOutOfDomain { u } => {
                write!(
                    f,
                    "scale u = {u} is outside the domain u > e (log log u must be positive)"
                )
            }
            Error::ScaleExceedsHorizon { u, horizon } => {
                write!(f, "scale u = {u} exceeds the simulated horizon {horizon}")
            }
            Error::InvalidParameter { name, reason } => write!(f, "invalid parameter `{name}`: {reason}"),
            Error::DimensionMismatch { what, expected, found } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, found {found}")
            }
            Error::BlowUp { time, scale: None } => write!(f, "solution blew up at time {time}"),
            Error::BlowUp { time, scale: Some(u) } => write!(f, "solution blew up at time {time} (scale u = {u})"),
            Error::RankDeficient { time, sigma_min } => write!(
                f,
                "diffusion matrix is rank deficient at t = {time} (smallest singular value {sigma_min:e})"
            ),
            Error::UnboundedFields => write!(f, "a limit field is declared unbounded; no sup-norm bound exists"),
            Error::TargetEnergy { index, energy } => write!(
                f,
                "recurrence target {index} has energy {energy} but targets must satisfy energy < 1"
            ),
            Error::InSeed {
                seed,
                index: Some(i),
                source,
            } => write!(f, "seed {seed}, scale index {i}: {source}"),
            Error::InSeed {
                seed,
                index: None,
                source,
            } => write!(f, "seed {seed}: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::InSeed { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}
