use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver did not converge after {iterations} iterations (relative cost change {rel_change:e})")]
    NonConvergence { iterations: usize, rel_change: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("position windows and separation bounds cannot be satisfied together")]
    ConstraintInfeasible,

    #[error("initial parameters violate the fit constraints: {0}")]
    InvalidInit(String),

    #[error("lines do not share a common voltage grid (line {0} differs)")]
    GridMismatch(usize),

    #[error("only {found} line fits succeeded, at least {required} are needed")]
    TooFewSuccessfulLines { found: usize, required: usize },

    #[error("peak separation must be positive, got {0}")]
    NonPositiveSeparation(f64),

    #[error("time step between lines {0} and {1} is not positive")]
    NonPositiveDt(usize, usize),

    #[error("region `{0}` has no samples")]
    EmptyRegion(String),

    #[error("parameter grid is empty")]
    EmptyGrid,

    #[error("polynomial basis of degree {degree} is rank deficient on a {nx}x{ny} grid")]
    RankDeficient { degree: usize, nx: usize, ny: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }
}
