use std::path::PathBuf;

use vsn_core::acoustic::AcousticError;
use vsn_core::corpus::CorpusError;
use vsn_core::dtm::DtmError;
use vsn_core::eval::EvalError;
use vsn_core::explain::ExplainError;
use vsn_core::linguistic::LinguisticError;
use vsn_core::refmetrics::RefMetricsError;
use vsn_core::shallow::ShallowError;
use vsn_core::titan::TitanError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate participant id {0}")]
    DuplicateId(String),
    #[error("participant {id}: cannot resolve {path}")]
    UnresolvablePath { id: String, path: PathBuf },
    #[error("manifest has no participants")]
    EmptyManifest,
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact {path}; {hint}")]
    MissingArtifact { path: PathBuf, hint: String },
    #[error("{path} was produced under config {found}, current config is {expected}")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("output directory is locked by {0}")]
    Locked(PathBuf),
    #[error("system {0} is not supported by this command")]
    UnsupportedSystem(u8),
    #[error("no usable participants for {0}")]
    NoParticipants(&'static str),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Acoustic(#[from] AcousticError),
    #[error(transparent)]
    Linguistic(#[from] LinguisticError),
    #[error(transparent)]
    RefMetrics(#[from] RefMetricsError),
    #[error(transparent)]
    Dtm(#[from] DtmError),
    #[error(transparent)]
    Shallow(#[from] ShallowError),
    #[error(transparent)]
    Titan(#[from] TitanError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> PipelineError {
    let path = path.into();
    move |source| PipelineError::Io { path, source }
}

pub(crate) fn format_err(path: impl Into<PathBuf>, reason: impl ToString) -> PipelineError {
    PipelineError::Format {
        path: path.into(),
        reason: reason.to_string(),
    }
}
