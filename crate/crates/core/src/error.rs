use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the lead-field library.
///
/// The variants map onto the three failure classes the CLI reports with
/// distinct exit codes: configuration/usage, numerical and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure{}: {reason}", fmt_point(.point))]
    Numerical {
        point: Option<Vec<f64>>,
        reason: String,
    },

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {}: {reason}", .path.display())]
    Format { path: PathBuf, reason: String },
}

fn fmt_point(point: &Option<Vec<f64>>) -> String {
    match point {
        Some(p) => format!(" at sigma = {p:?}"),
        None => String::new(),
    }
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(point: Option<&[f64]>, reason: impl Into<String>) -> Self {
        Error::Numerical {
            point: point.map(<[f64]>::to_vec),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
