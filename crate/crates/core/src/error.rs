use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: expected {expected} nodes, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density is not normalized: integral = {mass}")]
    NotNormalized { mass: f64 },

    #[error("density has negative values (min = {min})")]
    NegativeDensity { min: f64 },

    #[error(
        "CFL condition violated: dt = {dt} exceeds the stable limit {max_dt} \
         (max|u1| = {max_u1}, max|u2| = {max_u2}); use n_t >= {required_n_t}"
    )]
    Cfl {
        dt: f64,
        max_dt: f64,
        max_u1: f64,
        max_u2: f64,
        required_n_t: usize,
    },

    #[error("non-finite value produced during integration at step {step}")]
    Diverged { step: usize },

    #[error("mode/shape mismatch: {0}")]
    ModeMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
