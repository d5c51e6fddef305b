use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("batch norm needs at least two values per channel in train mode")]
    DegenerateBatch,
    #[error("non-finite value in numeric input")]
    NumericInput,
    #[error("label {0} is outside 0..6")]
    Label(usize),
    #[error("manifest has no rows")]
    EmptyManifest,
    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("model has no activation hook for Grad-CAM")]
    UnsupportedModel,
    #[error("{0}")]
    Data(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
