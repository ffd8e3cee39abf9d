use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions {dims:?}: {reason}")]
    InvalidDims { dims: Vec<usize>, reason: String },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: [usize; 4],
        rhs: [usize; 4],
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("backward requires a scalar (1,1,1,1) loss, got {0:?}")]
    NonScalarLoss([usize; 4]),

    #[error("loss is not attached to a recording tape")]
    DetachedGraph,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("corrupt header in {what}: {reason}")]
    CorruptHeader { what: String, reason: String },

    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

/// Coarse failure classes, shared by the CLI exit codes and the C status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

impl ErrorClass {
    /// Process exit code: 2 usage, 3 data, 4 numeric.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn dims(dims: &[usize], reason: impl Into<String>) -> Self {
        Error::InvalidDims {
            dims: dims.to_vec(),
            reason: reason.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::TopologyMismatch(_) => ErrorClass::Usage,
            Error::NonFinite(_) | Error::NonScalarLoss(_) | Error::DetachedGraph => ErrorClass::Numeric,
            Error::InvalidDims { .. }
            | Error::ShapeMismatch { .. }
            | Error::CorruptHeader { .. }
            | Error::Data(_)
            | Error::Io { .. }
            | Error::Image { .. } => ErrorClass::Data,
        }
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDims { .. } => "invalid_dims",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Config(_) => "config",
            Error::NonScalarLoss(_) => "non_scalar_loss",
            Error::DetachedGraph => "detached_graph",
            Error::NonFinite(_) => "non_finite",
            Error::CorruptHeader { .. } => "corrupt_header",
            Error::TopologyMismatch(_) => "topology_mismatch",
            Error::Data(_) => "data",
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
        }
    }
}
