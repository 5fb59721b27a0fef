use thiserror::Error;

/// Process exit codes.
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] siamese_verify::Error),
    #[error("configuration error: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use siamese_verify::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => match e {
                E::Config(_) | E::Label(_) => EXIT_CONFIG,
                E::NumericalAbort { .. } | E::NonFinite(_) => EXIT_NUMERICAL,
                _ => EXIT_INPUT,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
