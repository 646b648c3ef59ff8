use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid asset: {0}")]
    InvalidAsset(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("reconstruction failed during {stage}: {reason}")]
    Reconstruction { stage: &'static str, reason: String },

    #[error("placement failed: {0}")]
    Placement(String),

    #[error("simulation diverged: body {body} at step {step}")]
    SimulationDiverged { body: usize, step: u64 },

    #[error("depth {depth_m} m does not fit 16 bits at depth_scale {depth_scale}; use a larger depth_scale")]
    DepthRange { depth_m: f64, depth_scale: f64 },

    #[error("scene {scene}: {source}")]
    Scene {
        scene: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: png encoding: {source}", path.display())]
    Png {
        path: PathBuf,
        #[source]
        source: png::EncodingError,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (manifest, flags, paths)
    /// rather than a failure while running the pipeline.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::Json { .. } => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Scene { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
