use std::path::Path;

/// Failure of a command, carrying its exit status class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or options. Exit 1.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or mismatched input data. Exit 2.
    #[error("{0}")]
    Data(String),
    /// Training diverged or produced non-finite values. Exit 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<ntc_core::Error> for CliError {
    fn from(e: ntc_core::Error) -> Self {
        use ntc_core::Error as E;
        match e {
            E::NonFiniteLoss { .. } => CliError::Numerical(e.to_string()),
            E::InvalidProfile(_) | E::InvalidConfig(_) | E::MipOutOfRange { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
