use thiserror::Error;

/// Crate-wide error. Every message is prefixed with the module that raised it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numerics: signal has {0} samples, need at least 2")]
    EmptySignal(usize),
    #[error("numerics: non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("numerics: spectrum is not conjugate-symmetric (bin {bin}, deviation {deviation:e})")]
    AsymmetricSpectrum { bin: usize, deviation: f64 },
    #[error("numerics: shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("machine-sim: slip {0} outside [0, 1)")]
    InvalidSlip(f64),
    #[error("machine-sim: bearing characteristic frequency {0} Hz must be positive")]
    InvalidFv(f64),
    #[error("machine-sim: invalid {what}: {detail}")]
    InvalidSpec { what: &'static str, detail: String },

    #[error("preprocess: cutoff {cutoff} Hz must lie in (0, {nyquist}) Hz")]
    CutoffAboveNyquist { cutoff: f64, nyquist: f64 },
    #[error("preprocess: shift {shift} not smaller than signal length {len}")]
    ShiftTooLarge { shift: i64, len: usize },
    #[error("preprocess: amplitude scale {0} must be positive")]
    NonPositiveScale(f64),
    #[error("preprocess: noise sigma {0} must be non-negative")]
    NegativeSigma(f64),

    #[error("features: empty window")]
    EmptyWindow,
    #[error("features: no spectral content above DC")]
    NoSpectralContent,
    #[error("features: window has zero spectral power")]
    ZeroPower,
    #[error("features: recording {id} has {len} samples, window needs {window}")]
    RecordingTooShort { id: String, len: usize, window: usize },

    #[error("graphbuild: zero-norm feature vector")]
    ZeroVector,
    #[error("graphbuild: need at least 2 windows, got {0}")]
    TooFewWindows(usize),

    #[error("model: negative edge weight {weight} on ({i}, {j})")]
    NegativeWeight { i: usize, j: usize, weight: f64 },
    #[error("model: empty training set")]
    EmptyDataset,
    #[error("model: feature dimension {found} does not match expected {expected}")]
    FeatureDimMismatch { expected: usize, found: usize },
    #[error("model: invalid config: {0}")]
    InvalidModelConfig(String),

    #[error("eval: empty catalog")]
    EmptyCatalog,
    #[error("eval: invalid split ratios {0:?}")]
    InvalidRatios((f64, f64, f64)),
    #[error("eval: metric undefined ({0})")]
    UndefinedMetric(&'static str),

    #[error("io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("io: {path}: line {line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("io: {path}: channels {found:?} do not match expected {expected:?}")]
    ChannelMismatch {
        path: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("io: {path}: {detail}")]
    Format { path: String, detail: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
