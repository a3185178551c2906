use thiserror::Error;

/// Everything that can go wrong in the pipeline.
///
/// Variants split into contract/input failures and numerical failures; the
/// CLI maps the two families onto distinct exit codes via [`Error::is_numerical`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected_layers}x{expected_dim}, got {layers}x{dim}")]
    ShapeMismatch {
        expected_layers: usize,
        expected_dim: usize,
        layers: usize,
        dim: usize,
    },

    #[error("non-finite value at layer {layer}, index {index}")]
    NonFinite { layer: usize, index: usize },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("layer index {index} out of range for {layers} layers")]
    LayerOutOfRange { index: usize, layers: usize },

    #[error("layer mask is empty")]
    EmptyMask,

    #[error("resolution layer {layer} out of range 1..={max}")]
    ResolutionLayerOutOfRange { layer: usize, max: usize },

    #[error("direction for '{0}' is not unit-normalized")]
    NotNormalized(String),

    #[error("landmark index {0} out of range 1..=68")]
    LandmarkOutOfRange(usize),

    #[error("invalid landmark set '{id}': {reason}")]
    InvalidLandmarks { id: String, reason: String },

    #[error("missing id '{0}'")]
    MissingId(String),

    #[error("duplicate id '{0}'")]
    DuplicateId(String),

    #[error("unknown attribute '{0}'")]
    UnknownAttribute(String),

    #[error("inconsistent label keys in sample '{0}'")]
    InconsistentLabels(String),

    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),

    #[error("no admissible pairs")]
    NoAdmissiblePairs,

    #[error("all pair weights underflowed to zero")]
    WeightsUnderflow,

    #[error("directions are nearly linearly dependent at '{0}'")]
    NearDependence(String),

    #[error("basis is not orthonormal")]
    NotOrthonormal,

    #[error("basis directions do not share a single mask")]
    MixedMasks,

    #[error("invalid order permutation: {0}")]
    InvalidOrder(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergent(String),

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("invalid rule for '{attribute}': {reason}")]
    InvalidRule { attribute: String, reason: String },

    #[error("unresolved threshold for '{0}'")]
    UnresolvedThreshold(String),

    #[error("step cap exceeded while crossing to the recessive side for '{0}'")]
    StepCapExceeded(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNonConvergent(_) | Error::StepCapExceeded(_) | Error::WeightsUnderflow
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
