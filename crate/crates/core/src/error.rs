use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage a fold-level failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageTag {
    Load,
    Partition,
    Transform,
    FeatureSelection,
    Tuning,
    Training,
    Evaluation,
    Importance,
    Report,
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StageTag::Load => "load",
            StageTag::Partition => "partition",
            StageTag::Transform => "transform",
            StageTag::FeatureSelection => "feature-selection",
            StageTag::Tuning => "tuning",
            StageTag::Training => "training",
            StageTag::Evaluation => "evaluation",
            StageTag::Importance => "importance",
            StageTag::Report => "report",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("[{stage}{}] {source}", fold.map(|k| format!(" fold {k}")).unwrap_or_default())]
    Stage {
        stage: StageTag,
        fold: Option<usize>,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Error::Runtime(msg.into())
    }

    pub fn at(self, stage: StageTag, fold: Option<usize>) -> Self {
        match self {
            // keep the innermost tag
            Error::Stage { .. } => self,
            other => Error::Stage { stage, fold, source: Box::new(other) },
        }
    }

    /// Process exit code: 2 configuration, 3 data, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Csv(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Runtime(_) | Error::Io(_) | Error::Json(_) => 4,
        }
    }
}
