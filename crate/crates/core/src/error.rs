use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic header")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("malformed body: {0}")]
    Malformed(String),
    #[error("cannot serialize state: {0}")]
    Serialize(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("initial exposed count {exposed} exceeds population {population}")]
    ExposedExceedsPopulation { exposed: u64, population: u64 },

    #[error("cannot advance from day {current} back to day {requested}")]
    BackwardsAdvance { current: u32, requested: u32 },

    #[error("simulated day counter overflowed")]
    DayOverflow,

    #[error("parameter `{0}` cannot be overridden on restore")]
    NotOverridable(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("series length mismatch: {observed} observed vs {simulated} simulated")]
    LengthMismatch { observed: usize, simulated: usize },

    #[error("empty observation slice")]
    EmptySlice,

    #[error(
        "all importance weights vanished ({particles} particles, max log-weight {max_log_weight})"
    )]
    DegenerateWeights {
        particles: usize,
        max_log_weight: f64,
    },

    #[error("no trajectory for particle {0}")]
    MissingTrajectory(u64),

    #[error("missing checkpoint for window {window}, particle {particle} (lineage {lineage:?})")]
    MissingCheckpoint {
        window: u32,
        particle: u64,
        lineage: Vec<u64>,
    },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid window plan: {0}")]
    InvalidPlan(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{failed} of {total} particle simulations failed; first: {first}")]
    ParticleFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("window {window}: {source}")]
    Window {
        window: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {what}: {reason}")]
    Parse { what: String, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
