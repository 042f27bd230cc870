use std::path::PathBuf;

use thiserror::Error;

/// Errors across the library, grouped so the CLI can map them onto exit
/// codes: configuration problems (2), numerical failures (3), I/O (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("coverage violated: pi({action}|{state}) = {pi} but mu({action}|{state}) = 0")]
    Coverage { state: usize, action: usize, pi: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(
        "no stationary distribution after {iterations} iterations \
         (residual {residual:.3e}); the chain induced by the policy may not be ergodic"
    )]
    NonErgodic { iterations: usize, residual: f64 },

    #[error(
        "singular linear system while computing {context}: \
         min pivot {min_pivot:.3e}, condition estimate {condition:.3e}"
    )]
    Singular {
        context: &'static str,
        min_pivot: f64,
        condition: f64,
    },

    #[error(
        "expected emphasis diverges: spectral radius of the n-step target \
         operator is {spectral_radius:.6} >= 1, so the limiting trace expectation \
         is not a finite vector"
    )]
    EmphasisDiverges { spectral_radius: f64 },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("key matrix is not positive definite (min symmetric eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv at line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_)
            | Error::Distribution(_)
            | Error::Coverage { .. }
            | Error::Config(_) => 2,
            Error::NonErgodic { .. }
            | Error::Singular { .. }
            | Error::EmphasisDiverges { .. }
            | Error::NotSquare { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::EmptyBuffer => 3,
            Error::Io { .. } | Error::Csv { .. } => 4,
        }
    }

    /// An I/O failure carrying the path it happened on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
