use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot read config file: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("cannot serialize: {0}")]
    Serialize(#[from] toml::ser::Error),

    #[error(transparent)]
    Core(#[from] bregman_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        use bregman_core::Error as E;
        match self {
            CliError::Config(_) | CliError::ConfigParse(_) => 2,
            CliError::Core(
                E::TooCoarse(_)
                | E::NotNested { .. }
                | E::InvalidParameter(_)
                | E::ScheduleParse { .. }
                | E::InadmissibleBudget { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
