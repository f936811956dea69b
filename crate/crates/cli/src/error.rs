use ortrack::ErrorClass;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Provider(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Schema(_) => 4,
            CliError::Provider(_) => 5,
            CliError::Internal(_) => 6,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

impl From<ortrack::Error> for CliError {
    fn from(e: ortrack::Error) -> Self {
        let msg = e.to_string();
        match e.class() {
            ErrorClass::Input => CliError::Input(msg),
            ErrorClass::Schema => CliError::Schema(msg),
            ErrorClass::Provider => CliError::Provider(msg),
            ErrorClass::Internal => CliError::Internal(msg),
        }
    }
}
