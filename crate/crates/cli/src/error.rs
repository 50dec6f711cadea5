use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{}:{line}: {message}", path.display())]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{}: missing", path.display())]
    MissingFile { path: PathBuf },
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Failures reported by the processing library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Pipeline(#[from] forcemosaic_core::pipeline::PipelineError),
    #[error(transparent)]
    Calibration(#[from] forcemosaic_core::calibration::CalibrationError),
    #[error(transparent)]
    Simulator(#[from] forcemosaic_core::simulator::SimulatorError),
    #[error(transparent)]
    Features(#[from] forcemosaic_core::features::FeatureError),
    #[error(transparent)]
    Geometry(#[from] forcemosaic_core::GeometryError),
    #[error(transparent)]
    Image(#[from] forcemosaic_core::ImageError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Self::Format { path: path.into(), line, message: message.into() }
    }

    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }
}

macro_rules! lift {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Core(e.into())
            }
        }
    )*};
}

lift!(
    forcemosaic_core::pipeline::PipelineError,
    forcemosaic_core::calibration::CalibrationError,
    forcemosaic_core::simulator::SimulatorError,
    forcemosaic_core::features::FeatureError,
    forcemosaic_core::GeometryError,
    forcemosaic_core::ImageError
);
