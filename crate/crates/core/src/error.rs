use std::path::PathBuf;

use crate::tree::{NodeId, SegmentId};

/// Errors produced by the generator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown segment {0}")]
    UnknownSegment(SegmentId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("tree has no segments")]
    EmptyTree,
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("template `{template}`: {reason}")]
    InvalidTemplate { template: String, reason: String },
    #[error("keypoint ({x}, {y}) lies outside the {width} x {height} plane")]
    KeypointOutOfBounds { x: f64, y: f64, width: f64, height: f64 },
    #[error("could not place keypoint `{label}` without a degenerate segment after {attempts} attempts")]
    DegenerateKeypoint { label: String, attempts: usize },
    #[error("domain saturated: candidate distance threshold fell to {d_min:.3e} mm")]
    DomainSaturated { d_min: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),
    #[error("image {width}x{height} too small for offset ({dx}, {dy})")]
    ImageTooSmall { width: usize, height: usize, dx: i32, dy: i32 },
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("build stopped after {completed} of {total} identities: {source}")]
    PartialBuild { completed: usize, total: usize, source: Box<Error> },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Error::Parse { context: context.into(), message: message.to_string() }
    }
}
