use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("incompatible solver: {0}")]
    IncompatibleSolver(String),
    #[error(transparent)]
    Core(#[from] openhier::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure, 4 for size guards.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) | CliError::IncompatibleSolver(_) => 2,
            CliError::Core(e) if e.is_guard() => 4,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
            CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Schema(_) => "schema",
            CliError::IncompatibleSolver(_) => "incompatible_solver",
            CliError::Core(e) if e.is_guard() => "guard",
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Core(_) => "invalid_input",
            CliError::Io(_) => "io",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
