use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid value: {0}")]
    ValueError(String),
    #[error("duplicate customer id: {0}")]
    DuplicateId(String),
    #[error("unknown emotion label: {0}")]
    UnknownLabel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid clip duration {0} s (expected 0.5..=10)")]
    InvalidDuration(f64),
    #[error("clip has {len} samples, shorter than frame size {frame}")]
    ClipTooShort { len: usize, frame: usize },
    #[error("bad frame parameters: {0}")]
    BadFrameParams(String),
    #[error("bad median kernel: {0}")]
    BadKernel(String),
    #[error("bad frequency band: {0}")]
    BadBand(String),
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("too few examples: {0}")]
    TooFewExamples(String),
    #[error("target {0} outside [0, 1]")]
    TargetOutOfRange(f64),
    #[error("labeled set is empty")]
    EmptyLabeledSet,
    #[error("only one class present")]
    SingleClass,
    #[error("bad feature count k={k} for {n} features")]
    BadK { k: usize, n: usize },
    #[error("too few minority examples: have {have}, need at least {need}")]
    TooFewMinority { have: usize, need: usize },
    #[error("invalid indicator triple ({c}, {f}, {v})")]
    InvalidTriple { c: u8, f: u8, v: u8 },
    #[error("missing modality for customer {id}: {what}")]
    MissingModality { id: String, what: String },
    #[error("no relevant items for query")]
    NoRelevant,
    #[error("empty query set")]
    EmptyQuerySet,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate column: {0}")]
    DegenerateColumn(String),
    #[error("model format: {0}")]
    Format(String),
    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Attaches the offending path to an I/O failure.
pub trait PathContext<T> {
    fn at(self, path: &std::path::Path) -> Result<T>;
}

impl<T> PathContext<T> for std::io::Result<T> {
    fn at(self, path: &std::path::Path) -> Result<T> {
        self.map_err(|source| Error::File { path: path.to_path_buf(), source })
    }
}
