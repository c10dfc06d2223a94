use thiserror::Error;

/// Everything the pipeline can fail with.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller handed us something that violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Geometry that cannot be processed (collinear hull, 1×1 grid, ...).
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    /// A model backend reported a failure or returned a contract-violating result.
    #[error("{backend} backend: {message}")]
    Backend {
        backend: &'static str,
        message: String,
    },
    /// LLM replies that kept failing validation after all retries.
    #[error("prompt validation failed for yaws {yaws:?}: {reason}")]
    PromptValidation { yaws: Vec<f64>, reason: String },
    /// Camera placed outside the geometric prior's footprint.
    #[error("camera at ({x:.3}, {z:.3}) lies outside the prior hull")]
    CameraOutsideHull { x: f64, z: f64 },
    /// Remote call that failed after exhausting its retries.
    #[error("http request to {url} failed after {attempts} attempts: {message}")]
    Http {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    /// Wraps an error with the pipeline stage it came from.
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn backend(backend: &'static str, message: impl Into<String>) -> Self {
        Error::Backend {
            backend,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Attach a stage tag to errors flowing out of a pipeline step.
pub trait StageContext<T> {
    fn stage(self, stage: impl Into<String>) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: impl Into<String>) -> Result<T> {
        self.map_err(|source| Error::Stage {
            stage: stage.into(),
            source: Box::new(source),
        })
    }
}
