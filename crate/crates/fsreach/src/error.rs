use std::io;
use std::path::PathBuf;

/// `sysexits.h` codes used by the command-line tool.
pub mod exit {
    pub const OK: i32 = 0;
    /// Some Monte-Carlo estimate exceeded its bound.
    pub const CHECK_FAILED: i32 = 1;
    pub const INFEASIBLE: i32 = 2;
    pub const COLLISION: i32 = 3;
    pub const USAGE: i32 = 64;
    pub const DATA: i32 = 65;
    pub const NO_INPUT: i32 = 66;
    pub const SOFTWARE: i32 = 70;
    pub const CANT_CREATE: i32 = 73;
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {}: {source}", path.display())]
    Input { path: PathBuf, source: io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] fsreach_core::Error),
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => exit::USAGE,
            AppError::Input { .. } => exit::NO_INPUT,
            AppError::Parse { .. } | AppError::Core(_) => exit::DATA,
            AppError::Output { .. } => exit::CANT_CREATE,
            AppError::Serialize(_) => exit::SOFTWARE,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
