use thiserror::Error;

use crate::csvio::CsvError;
use crate::features::FeatureError;
use crate::frame::FrameError;
use crate::geom::GeomError;
use crate::masking::MaskError;
use crate::ransac::RansacError;
use crate::tracking::TrackingError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Ransac(#[from] RansacError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}: no PNG frames, need at least 2")]
    EmptyDirectory(String),
    #[error("{path} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        path: String,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("cannot decode {path}: {message}")]
    Decode { path: String, message: String },
    #[error("{context}: {message}")]
    Parse { context: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.to_string(),
            message: e.to_string(),
        }
    }

    /// Stable machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Geom(GeomError::DegenerateConfiguration(_)) => "degenerate_configuration",
            Error::Geom(_) => "geometry",
            Error::Frame(_) => "invalid_frame",
            Error::Feature(_) => "feature",
            Error::Mask(_) => "dimension_mismatch",
            Error::Ransac(_) => "estimation",
            Error::Tracking(TrackingError::InvalidBox { .. }) => "invalid_box",
            Error::Tracking(TrackingError::Csv(_)) | Error::Csv(_) => "parse_error",
            Error::Tracking(TrackingError::NonMonotonicFrames { .. }) => "non_monotonic_frames",
            Error::Tracking(_) => "tracking",
            Error::Io { .. } => "io_error",
            Error::EmptyDirectory(_) => "empty_directory",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Decode { .. } => "decode_error",
            Error::Parse { .. } => "parse_error",
            Error::Config(_) => "config_error",
            Error::LengthMismatch(_) => "length_mismatch",
        }
    }

    /// Process exit code for the CLI; 2 is reserved for usage errors.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "io_error" => 3,
            "empty_directory" => 4,
            "dimension_mismatch" => 5,
            "decode_error" => 6,
            "parse_error" => 7,
            "non_monotonic_frames" => 8,
            "invalid_box" => 9,
            "invalid_frame" => 10,
            "config_error" => 11,
            "length_mismatch" => 12,
            "degenerate_configuration" => 13,
            "geometry" => 14,
            "estimation" => 15,
            "tracking" => 16,
            "feature" => 17,
            _ => 1,
        }
    }
}
