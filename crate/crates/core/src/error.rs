use thiserror::Error;

/// Errors produced anywhere in the embedding / marching pipeline.
///
/// Variants are grouped so the CLI can map them onto exit codes:
/// [`HpmError::is_validation`] covers bad inputs and unmet preconditions,
/// [`HpmError::is_bound_violation`] covers measured quantities exceeding a
/// proven bound, everything else is a numerical failure.
#[derive(Debug, Error)]
pub enum HpmError {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index ({row}, {col}) out of bounds for {rows}x{cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("dense oracle cap exceeded: {entries} entries > cap {cap}")]
    DenseCapExceeded { entries: usize, cap: usize },

    #[error("size cap exceeded: {what} = {value} > {cap}")]
    SizeCapExceeded {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("F1 is not dissipative: max Re(lambda) = {0}")]
    NotDissipative(f64),

    #[error("F1 is not normal: ||F1 F1^T - F1^T F1|| = {defect:.3e} exceeds {tolerance:.3e}")]
    NotNormal { defect: f64, tolerance: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition failed [{condition}]: {detail}")]
    Precondition { condition: &'static str, detail: String },

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("bound violated [{check}]: measured {measured:.6e} vs bound {bound:.6e}")]
    BoundViolation {
        check: String,
        measured: f64,
        bound: f64,
    },

    #[error("inadmissible multi-index {0:?}")]
    InadmissibleIndex(Vec<usize>),

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("parse error: {0}")]
    Parse(String),

    /// Wraps an error with the pipeline stage it came from.
    #[error("{stage}: {inner}")]
    Stage {
        stage: &'static str,
        inner: Box<HpmError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = HpmError> = std::result::Result<T, E>;

impl HpmError {
    pub(crate) fn at(self, stage: &'static str) -> Self {
        HpmError::Stage {
            stage,
            inner: Box::new(self),
        }
    }

    /// The innermost error, with stage wrappers removed.
    pub fn root(&self) -> &HpmError {
        match self {
            HpmError::Stage { inner, .. } => inner.root(),
            other => other,
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            HpmError::DimensionMismatch { .. }
                | HpmError::IndexOutOfBounds { .. }
                | HpmError::NotDissipative(_)
                | HpmError::NotNormal { .. }
                | HpmError::InvalidParameter(_)
                | HpmError::Precondition { .. }
                | HpmError::InadmissibleIndex(_)
                | HpmError::Parse(_)
                | HpmError::SizeCapExceeded { .. }
                | HpmError::DenseCapExceeded { .. }
                | HpmError::Json(_)
                | HpmError::Io(_)
        )
    }

    pub fn is_bound_violation(&self) -> bool {
        matches!(self.root(), HpmError::BoundViolation { .. })
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
