use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("index {index} out of range 1..={max} ({context})")]
    IndexOutOfRange {
        index: usize,
        max: usize,
        context: &'static str,
    },

    #[error("stencil touches the lattice boundary at node {index:?}")]
    BoundaryStencil { index: Vec<usize> },

    #[error("singular point for map `{map}` at {point:?}: {reason}")]
    SingularPoint {
        map: String,
        point: Vec<f64>,
        reason: &'static str,
    },

    #[error("rank-deficient horizontal gradient: rank {rank} < {needed}")]
    RankDeficient { rank: usize, needed: usize },

    #[error("degenerate flow direction: |xi . Xu|^2 = {denom:.3e} below floor {floor:.3e}")]
    DegenerateDirection { denom: f64, floor: f64 },

    #[error("rank of Xu varies over the subdomain: saw ranks {ranks:?}")]
    RankVariation { ranks: Vec<usize> },

    #[error("vertical field continuation collapsed at sample {sample} (|proj| = {norm:.3e})")]
    ProjectionCollapse { sample: usize, norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown name `{name}` ({kind})")]
    UnknownName { name: String, kind: &'static str },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
