use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty table: {0}")]
    EmptyTable(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("numeric column `{column}` contains an empty cell at row {row}")]
    EmptyNumericCell { column: String, row: usize },
    #[error("unparsable numeric cell `{value}` in column `{column}` at row {row}")]
    BadNumber {
        column: String,
        row: usize,
        value: String,
    },
    #[error("unseen category `{value}` in column `{column}` at row {row}")]
    UnseenCategory {
        column: String,
        row: usize,
        value: String,
    },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("row {row} has {found} cells, expected {expected}")]
    RowWidth {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("dangling foreign key `{value}` in column `{column}`")]
    DanglingForeignKey { column: String, value: String },
    #[error("duplicate parent keys: `{0}`")]
    DuplicateParentKey(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),
    #[error("empty training input")]
    EmptyInput,
    #[error("non-finite value at row {0}")]
    NonFinite(usize),
    #[error("class {class} absent from training data ({n_classes} classes expected)")]
    MissingClass { class: usize, n_classes: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("dimension mismatch: expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid generator spec: {0}")]
    InvalidGenerator(String),
    #[error("generator failed for shadow {shadow}: {source}")]
    Generator {
        shadow: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("external generator failed: {0}")]
    ExternalGenerator(String),

    #[error("insufficient rows: need at least {needed}, have {available}")]
    InsufficientRows { needed: usize, available: usize },
    #[error("invalid run plan: {0}")]
    InvalidPlan(String),
    #[error("shadow {0} violates the member/non-member invariant: {1}")]
    ShadowInvariant(usize, String),

    #[error("categorical column `{column}` in synthetic data lacks category `{category}`")]
    MissingCategory { column: String, category: String },
    #[error("attribute predictors require at least two feature columns, found {0}")]
    TooFewColumns(usize),
    #[error("predictors may only be trained on synthetic data")]
    NotSynthetic,
    #[error("no applicable features for this schema and feature set")]
    NoApplicableFeatures,
    #[error("profiles do not share one layout")]
    LayoutMismatch,
    #[error("profile for record {0} has no label")]
    Unlabeled(u64),
    #[error("training profiles contain a single class")]
    SingleClass,
    #[error("empty candidate list")]
    NoCandidates,
    #[error("unknown feature kind `{0}`")]
    UnknownFeature(String),

    #[error("invalid attack bundle: {0}")]
    InvalidBundle(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
