use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit code for a configuration problem.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit code when a leakage rail refuses to continue.
pub const EXIT_LEAKAGE: i32 = 3;
/// Process exit code when a frozen artifact fails its checksum.
pub const EXIT_CHECKSUM: i32 = 4;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: relation index {relation} out of range (R = {num_relations})")]
    RelationRange {
        path: String,
        line: usize,
        relation: u64,
        num_relations: usize,
    },

    #[error("drug index {index} out of range ({num_drugs} drugs)")]
    DrugRange { index: u64, num_drugs: usize },

    #[error("{path}: row {row}: {msg}")]
    Format { path: String, row: usize, msg: String },

    #[error("drug {0} has no vector in the embedding table")]
    MissingDrug(u32),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("leakage check failed: {0}")]
    Leakage(String),

    #[error("checksum mismatch for {path}: manifest says {expected}, file hashes to {actual}")]
    Checksum {
        path: String,
        expected: String,
        actual: String,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("world generation failed: {0}")]
    Generation(String),

    #[error("stage `{stage}` failed (artifacts: {artifacts:?}): {source}")]
    Stage {
        stage: String,
        artifacts: Vec<PathBuf>,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into().display().to_string(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Wraps `self` with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &str, artifacts: Vec<PathBuf>) -> Self {
        match self {
            // Keep the innermost stage; it is the one that actually failed.
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.to_string(),
                artifacts,
                source: Box::new(e),
            },
        }
    }

    /// Exit code the command-line driver reports for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => EXIT_CONFIG,
            Error::Leakage(_) => EXIT_LEAKAGE,
            Error::Checksum { .. } => EXIT_CHECKSUM,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_innermost_error() {
        assert_eq!(Error::config("x").exit_code(), EXIT_CONFIG);
        let e = Error::Leakage("planted".into()).in_stage("distill", vec![]);
        assert_eq!(e.exit_code(), EXIT_LEAKAGE);
        let e = e.in_stage("outer", vec![]);
        assert!(e.to_string().contains("distill"));
        let e = Error::Checksum {
            path: "p".into(),
            expected: "a".into(),
            actual: "b".into(),
        };
        assert_eq!(e.exit_code(), EXIT_CHECKSUM);
        assert_eq!(Error::Diverged("nan".into()).exit_code(), 1);
    }
}
