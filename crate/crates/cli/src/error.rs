use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing input: {}", .0.display())]
    MissingPath(PathBuf),
    #[error("stage {stage} failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },
    #[error(transparent)]
    Core(#[from] restograph::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::MissingPath(_) => 2,
            CliError::Stage { source, .. } => source.exit_code(),
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(restograph::Error::Config(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}
