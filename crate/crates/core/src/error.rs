use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("session lacks a {0} stream")]
    MissingStream(&'static str),

    #[error("rating {0} outside 1..=7")]
    OutOfRange(i64),

    #[error("ingest error in {file}: {msg}")]
    Ingest { file: String, msg: String },

    #[error("invalid session: {0}")]
    InvalidSession(String),

    #[error("filter cutoff {cutoff_hz} Hz violates Nyquist for {rate_hz} Hz sampling")]
    NyquistViolation { cutoff_hz: f64, rate_hz: f64 },

    #[error("invalid filter specification: {0}")]
    InvalidFilter(String),

    #[error("signal too short: need {need} samples, got {got}")]
    TooShort { need: usize, got: usize },

    #[error("ICA needs at least {need} channels, got {got}")]
    TooFewChannels { need: usize, got: usize },

    #[error("fewer than {need} trials carry a luminance value (got {got})")]
    InsufficientLuminance { need: usize, got: usize },

    #[error("no valid pupil samples: {0}")]
    NoValidPupil(String),

    #[error("no valid gaze samples in trial {0}")]
    NoValidGaze(String),

    #[error("trial {trial} unusable: {reason}")]
    UnusableTrial { trial: String, reason: String },

    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),

    #[error("matrix is singular: {0}")]
    SingularMatrix(String),

    #[error("k = {k} outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("unknown feature column `{0}`")]
    UnknownFeature(String),

    #[error("training set contains a single class")]
    SingleClass,

    #[error("{what} did not converge within {iterations} iterations")]
    NotConverged { what: &'static str, iterations: usize },

    #[error("column mismatch: {0}")]
    ColumnMismatch(String),

    #[error("too few samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("could not deal stratified folds after {0} attempts")]
    UnstratifiableFolds(usize),

    #[error("insufficient pairs for correlation: {0} < 3")]
    InsufficientPairs(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{stage} failed{}: {source}", trial.as_ref().map(|t| format!(" on trial {t}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        trial: Option<String>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn ingest(file: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Ingest {
            file: file.into(),
            msg: msg.into(),
        }
    }

    pub fn at_stage(self, stage: &'static str, trial: Option<&str>) -> Self {
        Error::Stage {
            stage,
            trial: trial.map(str::to_string),
            source: Box::new(self),
        }
    }
}
