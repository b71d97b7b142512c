use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("action {value} outside bounds [{lo}, {hi}] in dimension {dim}")]
    ActionOutOfBounds { dim: usize, value: f64, lo: f64, hi: f64 },
    #[error("batch needs at least {min} episodes, got {got}")]
    BatchTooSmall { min: usize, got: usize },
    #[error("empty input to {0}")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("layout sampling exceeded {0} attempts")]
    Layout(usize),
    #[error("step called after the episode finished")]
    EpisodeDone,
    #[error("enumeration bound exceeded: {count} trajectories (limit {limit})")]
    EnumerationBound { count: u128, limit: u128 },
    #[error("weight function kink at realized probability {0}; perturb the policy")]
    Kink(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { what, expected, got })
    }
}
