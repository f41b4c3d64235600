use std::path::PathBuf;

/// Errors raised anywhere in the audit pipeline.
#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{source_name}: row {row}: {message}")]
    Load {
        source_name: String,
        row: usize,
        message: String,
    },

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("backend `{backend}` failed on `{item}`: {message}")]
    Backend {
        backend: String,
        item: String,
        message: String,
    },

    #[error("image `{id}`: {message}")]
    Image { id: String, message: String },

    #[error("computation error: {0}")]
    Computation(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<AuditError>,
    },
}

pub type Result<T> = std::result::Result<T, AuditError>;

impl AuditError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AuditError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(source_name: impl Into<String>, row: usize, message: impl Into<String>) -> Self {
        AuditError::Load {
            source_name: source_name.into(),
            row,
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        AuditError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 1 validation, 2 configuration, 3 runtime/backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            AuditError::Validation(_) => 1,
            AuditError::Config(_) | AuditError::Load { .. } | AuditError::Contract(_) => 2,
            AuditError::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
