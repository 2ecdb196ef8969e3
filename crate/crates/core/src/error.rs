use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("invalid hyperparameter `{name}`: {reason}")]
    InvalidHyperparameter { name: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("query carries no head weights")]
    MissingHeadWeights,

    #[error("memory store is empty")]
    EmptyStore,

    #[error("corpus has no documents")]
    EmptyCorpus,

    #[error("inverted index has not been built")]
    UnbuiltIndex,

    #[error("store of kind {store} is incompatible with {method}")]
    IncompatibleStore { store: String, method: String },

    #[error("index of kind {actual} where {expected} was required")]
    WrongIndexKind {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("query mode mismatch: {0}")]
    QueryMode(&'static str),

    #[error("total time is zero")]
    ZeroTotalTime,

    #[error("arithmetic intensity is undefined when no bytes are moved")]
    ZeroBytes,

    #[error("working set of {working_set} bytes exceeds total tier capacity of {capacity} bytes")]
    CapacityExceeded { working_set: f64, capacity: f64 },

    #[error("device `{device}` has no kernel power for tag `{tag}`")]
    UnknownTag { device: String, tag: String },

    #[error("{method} has no {step} step")]
    StepNotApplicable { method: String, step: String },

    #[error("{0} is modelled for classification only and has no request profile")]
    ClassificationOnly(String),

    #[error("no placement is feasible: {0}")]
    NoFeasiblePlan(String),

    #[error("unknown profile `{0}`")]
    UnknownProfile(String),

    #[error("invalid profile `{name}`: {reason}")]
    InvalidProfile { name: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn hyper(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidHyperparameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
