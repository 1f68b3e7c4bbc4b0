use thiserror::Error;

use infoval_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io { context: context.into(), source }
    }

    /// 0 ok, 2 config, 3 numeric, 4 empty group, 5 unsupported state, 6 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Io { .. } => 6,
            Self::Core(e) => match e {
                CoreError::Domain(_) | CoreError::Schema(_) | CoreError::Config(_) | CoreError::Budget(_) => 2,
                CoreError::Numeric(_) | CoreError::UndefinedPosterior(_) => 3,
                CoreError::NoInstances(_) | CoreError::EmptyDataset => 4,
                CoreError::Unsupported(_) => 5,
                CoreError::Io(_) => 6,
                CoreError::Csv(c) if c.is_io_error() => 6,
                CoreError::Csv(_) => 2,
            },
        }
    }
}
