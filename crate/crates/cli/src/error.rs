use geokg::autodiff::AutodiffError;
use geokg::ingest::IngestError;
use geokg::kg::KgError;
use geokg::models::ModelError;
use geokg::subgraph::SubgraphError;
use geokg::train::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    /// Unreadable or malformed persisted graph.
    pub fn graph(dir: &std::path::Path, e: KgError) -> Self {
        CliError::Config(format!("graph {}: {e}", dir.display()))
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::InvalidScope(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SubgraphError> for CliError {
    fn from(e: SubgraphError) -> Self {
        match e {
            SubgraphError::ZeroRadius => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Autodiff(AutodiffError::Checkpoint { .. } | AutodiffError::Io { .. }) => {
                CliError::Data(e.to_string())
            }
            ModelError::Autodiff(_) => CliError::Numeric(e.to_string()),
            ModelError::Subgraph(s) => s.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            TrainError::InvalidConfig(_) => CliError::Config(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Subgraph(s) => s.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}
