use std::path::PathBuf;

use relmem::pipeline::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),

    #[error("missing {}: run `relmem {command}` first", artifact.display())]
    Missing { artifact: PathBuf, command: &'static str },

    #[error(transparent)]
    Core(#[from] relmem::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing { .. } => 3,
            _ => 1,
        }
    }
}

pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
