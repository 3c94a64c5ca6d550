use glaa::GlaaError;
use thiserror::Error;

/// Failures reported by the binary. Each kind has its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Dimension(String),
    #[error("{0}")]
    Rank(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Dimension(_) => 4,
            CliError::Rank(_) => 5,
            CliError::Numerical(_) => 6,
            CliError::Io(_) => 7,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Parse(_) => "parse",
            CliError::Dimension(_) => "dimension",
            CliError::Rank(_) => "rank",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    /// Single line: `error[kind]: message`, with newlines in the message flattened.
    pub fn line(&self) -> String {
        format!("error[{}]: {}", self.kind(), self.to_string().replace('\n', " "))
    }
}

impl From<GlaaError> for CliError {
    fn from(e: GlaaError) -> Self {
        let msg = e.to_string();
        match e {
            GlaaError::InvalidArgument(_) => CliError::Usage(msg),
            GlaaError::DimensionMismatch(_) | GlaaError::TooFewObservations(_) => {
                CliError::Dimension(msg)
            }
            GlaaError::RankTooLarge { .. } => CliError::Rank(msg),
            GlaaError::NotCentered
            | GlaaError::Singular(_)
            | GlaaError::Numerical(_)
            | GlaaError::Tuning(_) => CliError::Numerical(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
