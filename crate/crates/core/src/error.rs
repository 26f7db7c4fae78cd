use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{column}`")]
    MissingColumn { column: String },

    #[error("parse error at data row {row}, column `{column}`: cannot read `{value}` as a finite number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("cannot stratify: classes with fewer than 2 rows: {}", classes.join(", "))]
    Stratification { classes: Vec<String> },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("no model passed admission threshold {threshold}; best was {best_kind} with {best_score:.4}")]
    Admission {
        threshold: f64,
        best_kind: String,
        best_score: f64,
    },

    #[error("degenerate weights: every committee F1 weight is zero")]
    DegenerateWeights,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported model document version {0}")]
    Version(u32),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(context: &str, expected: usize, found: usize) -> Self {
        Error::Shape {
            context: context.to_string(),
            expected,
            found,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
