use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: String,
        found: String,
    },

    #[error("filter radius {f} too large for spatial side {d} (need f + 1 <= d)")]
    FilterTooLarge { f: usize, d: usize },

    #[error("invalid norm index {0}; exact induced norms exist only for p = 1 and p = inf")]
    InvalidNormIndex(f64),

    #[error("depth {depth} out of range (network has blocks 0..={max})")]
    DepthOutOfRange { depth: isize, max: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("input outside the unit cube at coordinate {index} (value {value})")]
    OutsideUnitCube { index: usize, value: f64 },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    #[error("degenerate draw in block {block}, layer {layer} after {retries} retries")]
    DegenerateDraw {
        block: usize,
        layer: usize,
        retries: usize,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
