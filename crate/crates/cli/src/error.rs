use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Compute(String),

    #[error(transparent)]
    Core(#[from] ffm::Error),

    #[error("{failed} of {total} self-check invariants failed")]
    SelfCheck { failed: usize, total: usize },
}

impl CliError {
    /// 2 for unusable input or usage, 1 for failed computations.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Compute(_) | CliError::SelfCheck { .. } => 1,
            CliError::Core(e) => match e {
                ffm::Error::Parse { .. }
                | ffm::Error::Io { .. }
                | ffm::Error::DuplicateKey { .. }
                | ffm::Error::InvalidArgument(_)
                | ffm::Error::SchemaVersion { .. }
                | ffm::Error::Serde(_) => 2,
                _ => 1,
            },
        }
    }
}
