use lsf_core::LsfError;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] LsfError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Process exit status for each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Config = 2,
    Infeasible = 3,
    Numerical = 4,
}

impl CliError {
    pub fn class(&self) -> ExitClass {
        match self {
            CliError::Core(e) => match e {
                LsfError::EmptyToneGrid { .. }
                | LsfError::EmptyRestriction { .. }
                | LsfError::TrivialKernel { .. }
                | LsfError::EmptyPool { .. }
                | LsfError::NoUsableEntries
                | LsfError::UnusablePoolEntry(_)
                | LsfError::NotAdiabatic { .. }
                | LsfError::SimulationTooLarge { .. } => ExitClass::Infeasible,
                LsfError::TraceDrift { .. } => ExitClass::Numerical,
                _ => ExitClass::Config,
            },
            _ => ExitClass::Config,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class() as i32
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::File { path: path.display().to_string(), source })
}

pub(crate) fn write_file(path: &std::path::Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::File { path: path.display().to_string(), source })
}
