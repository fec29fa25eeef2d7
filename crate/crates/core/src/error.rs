use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate polygon: {vertices} vertices, signed area {area}")]
    DegeneratePolygon { vertices: usize, area: f64 },

    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),

    #[error("invalid bounding box: width {w}, height {h}")]
    InvalidBBox { w: f64, h: f64 },

    #[error("invalid image {id}: {width}x{height}")]
    InvalidImage { id: u64, width: u32, height: u32 },

    #[error("annotation {annotation} references unknown image {image}")]
    UnresolvedImage { annotation: u64, image: u64 },

    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("feature map must be square for rotation, got {height}x{width}")]
    NonSquareFeatureMap { height: usize, width: usize },

    #[error("feature map shape {channels}x{height}x{width} needs {expected} values, got {found}")]
    FeatureShape {
        channels: usize,
        height: usize,
        width: usize,
        expected: usize,
        found: usize,
    },

    #[error("regressor expects {expected} inputs, feature map has {found}")]
    InputDimension { expected: usize, found: usize },

    #[error("invalid proposal size {w}x{h}")]
    InvalidProposal { w: f64, h: f64 },

    #[error("no candidate offsets to fuse")]
    EmptyCandidates,

    #[error("rotation angle set must be non-empty and start at 0")]
    InvalidAngleSet,

    #[error("polar radius must be non-negative, got {0}")]
    NegativeRadius(f64),

    #[error("instances span several images ({0} and {1})")]
    MixedImages(u64, u64),

    #[error("prediction references unknown image {0}")]
    UnknownImage(u64),

    #[error("placed only {placed} of {requested} buildings without overlap")]
    Placement { requested: usize, placed: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}
