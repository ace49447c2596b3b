use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate row for advertiser {advertiser_id} on {date}")]
    DuplicateRow { advertiser_id: String, date: NaiveDate },

    #[error("no advertisers survive filtering")]
    NoAdvertisers,

    #[error("channel `{channel}` of advertiser {advertiser_id} is entirely missing")]
    MissingChannel { advertiser_id: String, channel: String },

    #[error("advertiser {0} has zero clicks on every day")]
    AllZeroClicks(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no shock configured")]
    NoShock,

    #[error("optimizer did not converge after {iterations} iterations (best objective {best_objective})")]
    NonConvergence {
        iterations: usize,
        best_objective: f64,
        best_params: Vec<f64>,
    },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("model has no budget channel")]
    NoBudgetChannel,

    #[error("wrong model kind: expected {expected}, got {actual}")]
    WrongModelKind { expected: String, actual: String },

    #[error("unknown advertiser {0}")]
    UnknownAdvertiser(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
