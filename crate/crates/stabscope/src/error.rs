use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Invalid {
        path: PathBuf,
        #[source]
        source: stabscope_core::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage}: missing prerequisite, run `stabscope {needed}` first")]
    MissingPrerequisite { stage: &'static str, needed: &'static str },
    #[error("{stage}: {artifact} is stale (expected hash {expected}, found {found}); re-run the producing stage")]
    HashMismatch {
        stage: &'static str,
        artifact: String,
        expected: String,
        found: String,
    },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: stabscope_core::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn malformed(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Malformed { path: path.into(), message: message.into() }
    }

    pub fn json(path: impl Into<PathBuf>, e: serde_json::Error) -> Self {
        Error::Parse { path: path.into(), line: e.line(), column: e.column(), message: e.to_string() }
    }
}

/// Attaches a stage name to core errors.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for stabscope_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| Error::Stage { stage, source })
    }
}
