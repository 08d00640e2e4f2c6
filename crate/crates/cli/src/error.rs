use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] looptree::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for invalid input, 3 for runs that were valid but could not
    /// produce an estimate, 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        use looptree::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(
                E::InvalidParameter { .. } | E::UnknownVertex(_) | E::UnknownEdge(_),
            ) => 2,
            CliError::Core(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}
