use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] cpc_core::Error),

    #[error("{0}")]
    Validation(String),

    #[error("{0} not computed yet")]
    NotComputed(String),

    #[error("no trained models in {0}")]
    NoModels(String),

    #[error("no model {config_tag} for advertiser {advertiser_id}")]
    UnknownModel { advertiser_id: String, config_tag: String },

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

impl ServiceError {
    pub fn validation(msg: impl Into<String>) -> Self {
        ServiceError::Validation(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        ServiceError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: &std::path::Path, source: serde_json::Error) -> Self {
        ServiceError::Json {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for errors caused by the caller's input rather than by the
    /// program or its environment.
    pub fn is_validation(&self) -> bool {
        use cpc_core::Error as E;
        match self {
            ServiceError::Core(e) => !matches!(
                e,
                E::Io(_) | E::Json(_) | E::Csv(_) | E::Shape { .. } | E::Divergence { .. } | E::NonConvergence { .. }
            ),
            ServiceError::Validation(_)
            | ServiceError::NotComputed(_)
            | ServiceError::NoModels(_)
            | ServiceError::UnknownModel { .. } => true,
            ServiceError::Io { .. } | ServiceError::Json { .. } => false,
        }
    }

    /// 1 for validation errors, 2 for internal ones.
    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            1
        } else {
            2
        }
    }
}
