use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("winding {winding} is not congruent to period {period} mod 2")]
    ParityViolation { period: usize, winding: i64 },

    #[error("height increment {increment} between sites {left} and {right} is not +-1")]
    SlopeViolation { left: i64, right: i64, increment: i64 },

    #[error("profile winding {found} does not match domain winding {expected}")]
    WindingMismatch { expected: i64, found: i64 },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("site {site} is outside the domain")]
    OutOfDomain { site: i64 },

    #[error("q-Pochhammer product does not converge for q = {q}")]
    NonConvergent { q: f64 },

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("kernel window too small: tail mass {tail_mass:e} exceeds {tolerance:e}")]
    WindowTooSmall { tail_mass: f64, tolerance: f64 },

    #[error("increments do not cover the kernel support: missing mass {missing_mass:e}")]
    CoverageError { missing_mass: f64 },

    #[error("mode {k} is not dissipative for A = {a}")]
    NonDissipative { k: i64, a: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient samples: {found} < {required}")]
    InsufficientSamples { found: usize, required: usize },

    #[error("trajectory has no event log")]
    MissingEventLog,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration rejected:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigError>),

    #[error("{phase}: {source}")]
    Phase {
        phase: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_phase(self, phase: impl Into<String>) -> Self {
        Error::Phase {
            phase: phase.into(),
            source: Box::new(self),
        }
    }
}

/// A single problem found while validating an experiment configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("schema error at `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("range error at `{key}`: {value} {message}")]
    Range {
        key: String,
        value: String,
        message: String,
    },
}

impl ConfigError {
    pub fn key(&self) -> &str {
        match self {
            ConfigError::Schema { key, .. } | ConfigError::Range { key, .. } => key,
        }
    }
}
