use std::path::PathBuf;

/// Process exit statuses. Usage errors are reported by the argument parser
/// with status 2.
pub mod exit {
    pub const OK: u8 = 0;
    pub const IO: u8 = 3;
    pub const INVALID: u8 = 4;
    pub const DIVERGED: u8 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{context}: {source}")]
    Invalid { context: String, source: gfm_core::Error },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Diverged(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn invalid(context: impl Into<String>, source: gfm_core::Error) -> Self {
        Self::Invalid { context: context.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Io { .. } => exit::IO,
            Self::Invalid { .. } | Self::Usage(_) => exit::INVALID,
            Self::Diverged(_) => exit::DIVERGED,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
