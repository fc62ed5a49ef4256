use thiserror::Error;

/// Errors surfaced by the core library.
#[derive(Debug, Error)]
pub enum QmapError {
    #[error("value {0} outside the signal domain [0, 1)")]
    OutOfDomain(f64),
    #[error("bin index {bin} out of range for {bits}-bit quantizer")]
    BinOutOfRange { bin: u32, bits: u32 },
    #[error("unsupported bit depth {0} (expected 1..=32)")]
    BadBits(u32),
    #[error("sequence of length {len} shorter than block length {block}")]
    SequenceTooShort { len: usize, block: usize },
    #[error("probability {0} is not positive")]
    NonPositiveProbability(f64),
    #[error("block probabilities sum to {0}, which exceeds 1")]
    MassExceedsOne(f64),
    #[error("sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("invalid model: {0}")]
    BadModel(String),
    #[error("weight table has block length {got}, expected {expected}")]
    WrongBlockLen { got: usize, expected: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("instance too large for exhaustive search: {bits} candidate bits (limit {limit})")]
    TooLarge { bits: u32, limit: u32 },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("bit range must span at least {0} values")]
    RangeTooNarrow(usize),
    #[error("degenerate breakpoints: {0}")]
    DegenerateBreakpoints(String),
    #[error("image too small: {width}x{height} (minimum 4x4)")]
    ImageTooSmall { width: usize, height: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QmapError>;
