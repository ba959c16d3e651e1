use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid alphabet: {0}")]
    Alphabet(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("value {value} outside {name} alphabet {lo}..={hi}")]
    Domain {
        name: &'static str,
        value: i64,
        lo: i64,
        hi: i64,
    },

    #[error("{name} = {value} out of range: {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("conservation violated: s={s}, x={x}, y={y} gives battery level {next} outside 0..={ms}")]
    Conservation {
        s: usize,
        x: usize,
        y: usize,
        next: i64,
        ms: usize,
    },

    #[error("simulation aborted at step {step}: {reason}")]
    Simulation { step: usize, reason: String },

    #[error("conditioning on null event: observation y={y} has zero predicted probability")]
    NullObservation { y: usize },

    #[error("invalid policy: {0}")]
    Policy(String),

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("budget exceeded: {what} needs {required}, limit is {limit}")]
    Budget {
        what: &'static str,
        required: u128,
        limit: u128,
    },

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    NonConvergence,
    Budget,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NonConvergence(_) => ErrorClass::NonConvergence,
            Error::Budget { .. } => ErrorClass::Budget,
            Error::Io(_) | Error::Csv(_) => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Alphabet(_) => "alphabet",
            Error::Distribution(_) => "distribution",
            Error::Domain { .. } | Error::OutOfRange { .. } => "domain",
            Error::Conservation { .. } => "conservation",
            Error::Simulation { .. } => "simulation",
            Error::NullObservation { .. } => "null_observation",
            Error::Policy(_) => "policy",
            Error::Incompatible(_) => "incompatible",
            Error::Budget { .. } => "budget",
            Error::NonConvergence(_) => "non_convergence",
            Error::Parse(_) => "parse",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
        }
    }
}
