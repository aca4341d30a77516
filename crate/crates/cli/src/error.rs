use std::path::Path;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_STRICT: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_CORRUPT: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{failed} of {total} images failed extraction")]
    StrictExtraction { failed: usize, total: usize },
    #[error("{path}: {source}")]
    Artifact { path: String, source: rfdfin_core::Error },
    #[error(transparent)]
    Core(#[from] rfdfin_core::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// Wraps a failure to read a stored artifact such as a checkpoint.
    pub fn artifact(path: &Path, source: rfdfin_core::Error) -> Self {
        CliError::Artifact { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use rfdfin_core::Error as E;
        match self {
            CliError::StrictExtraction { .. } => EXIT_STRICT,
            CliError::Core(E::Diverged(_)) => EXIT_DIVERGED,
            CliError::Core(E::Corrupt(_)) => EXIT_CORRUPT,
            CliError::Artifact { source: E::Corrupt(_) | E::DimMismatch { .. } | E::InvalidParameter(_), .. } => {
                EXIT_CORRUPT
            }
            _ => EXIT_USAGE,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rfdfin_core::Error as E;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::StrictExtraction { failed: 1, total: 2 }.exit_code(), 2);
        assert_eq!(CliError::Core(E::Diverged("nan".into())).exit_code(), 3);
        assert_eq!(CliError::artifact(Path::new("c"), E::Corrupt("crc".into())).exit_code(), 4);
        let missing = std::io::Error::from(std::io::ErrorKind::NotFound);
        assert_eq!(CliError::artifact(Path::new("c"), E::Io(missing)).exit_code(), 1);
    }
}
