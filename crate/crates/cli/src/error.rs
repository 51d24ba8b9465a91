use reinverify::breakpoint::SearchError;
use reinverify::drlp::DrlpError;
use reinverify::interpret::InterpretError;
use reinverify::network::NetworkError;
use reinverify::shaping::ShapingError;
use reinverify::verify::VerifyError;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EXIT_USAGE: u8 = 64;
pub const EXIT_DATA: u8 = 65;
pub const EXIT_SOFTWARE: u8 = 70;
pub const EXIT_IO: u8 = 74;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Drlp { path: PathBuf, source: DrlpError },
    #[error("{}: {source}", path.display())]
    Network { path: PathBuf, source: NetworkError },
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Interpret(#[from] InterpretError),
    #[error(transparent)]
    Shaping(#[from] ShapingError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) | CliError::Drlp { .. } => EXIT_DATA,
            CliError::Io { .. } => EXIT_IO,
            CliError::Network {
                source: NetworkError::Io(_),
                ..
            } => EXIT_IO,
            CliError::Network { .. } => EXIT_DATA,
            CliError::Verify(VerifyError::Arity { .. } | VerifyError::Drlp(_)) => EXIT_DATA,
            CliError::Verify(_) => EXIT_SOFTWARE,
            CliError::Search(
                SearchError::InvalidSpec { .. } | SearchError::SpecMismatch { .. },
            ) => EXIT_USAGE,
            CliError::Search(_) => EXIT_SOFTWARE,
            CliError::Interpret(InterpretError::InvalidQuestion(_)) => EXIT_USAGE,
            CliError::Interpret(_) => EXIT_SOFTWARE,
            CliError::Shaping(
                ShapingError::InvalidBox(_)
                | ShapingError::InvalidConfig(_)
                | ShapingError::Dimension(_)
                | ShapingError::EmptyTrajectory,
            ) => EXIT_DATA,
            CliError::Shaping(_) => EXIT_SOFTWARE,
        }
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
