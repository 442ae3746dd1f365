use std::fmt;

use htdetect_core::corpus::CorpusError;
use htdetect_core::featurize::FeaturizeError;
use htdetect_core::metrics::MetricsError;
use htdetect_core::models::ModelError;
use htdetect_core::trainer::TrainError;

/// Process exit codes.
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad input, config or artifact; detected before or instead of work.
    Validation,
    /// Failure while doing the work (I/O, training, missing checkpoint).
    Runtime,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn validation(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            kind: Kind::Validation,
            error: error.into(),
        }
    }

    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            kind: Kind::Runtime,
            error: error.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Validation => EXIT_VALIDATION,
            Kind::Runtime => EXIT_RUNTIME,
        }
    }

    pub fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> Self {
        Failure {
            kind: self.kind,
            error: self.error.context(msg),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, Failure>;

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => Failure::runtime(e),
            _ => Failure::validation(e),
        }
    }
}

impl From<FeaturizeError> for Failure {
    fn from(e: FeaturizeError) -> Self {
        match e {
            FeaturizeError::Io { .. } => Failure::runtime(e),
            _ => Failure::validation(e),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::SpecMismatch { .. }
            | ModelError::InvalidSpec(_)
            | ModelError::ShapeMismatch(_)
            | ModelError::BadArtifact { .. }
            | ModelError::Tokenizer(_) => Failure::validation(e),
            ModelError::CheckpointUnavailable { .. } | ModelError::Backend(_) | ModelError::Io { .. } => {
                Failure::runtime(e)
            }
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Featurize(f) => f.into(),
            TrainError::InvalidConfig(_) | TrainError::ShapeMismatch(_) | TrainError::EmptyTrainingSet => {
                Failure::validation(e)
            }
            _ => Failure::runtime(e),
        }
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure::validation(e)
    }
}

/// Reads a file, mapping a missing file to a validation failure.
pub fn read_to_string(path: &std::path::Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| {
        let kind = if e.kind() == std::io::ErrorKind::NotFound {
            Kind::Validation
        } else {
            Kind::Runtime
        };
        Failure {
            kind,
            error: anyhow::Error::new(e).context(format!("cannot read {}", path.display())),
        }
    })
}

/// Atomically writes a file; failures are runtime errors.
pub fn write(path: &std::path::Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| Failure::runtime(anyhow::Error::new(e).context(format!("cannot create {}", parent.display()))))?;
    }
    htdetect_core::artifact::atomic_write(path, bytes)
        .map_err(|e| Failure::runtime(anyhow::Error::new(e).context(format!("cannot write {}", path.display()))))
}
