use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// The message starts with the offending key.
    #[error("{0}")]
    Config(String),

    #[error("solver: {0}")]
    Solver(#[from] intent_games::Error),

    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}
