use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("utterance too short: {samples} samples, need at least {window}")]
    UtteranceTooShort { samples: usize, window: usize },

    #[error("unsupported sample rate {found} Hz (expected {expected} Hz)")]
    UnsupportedSampleRate { found: u32, expected: u32 },

    #[error("audio contains non-finite or out-of-range samples")]
    InvalidAudio,

    #[error("silent frame")]
    SilentFrame,

    #[error("unstable frame (reflection coefficient {reflection} at order {order})")]
    UnstableFrame { order: usize, reflection: f64 },

    #[error("no usable frames")]
    NoUsableFrames,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("too few points ({points}) for {components} mixture components")]
    TooFewPoints { points: usize, components: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("sequence too short for second-order model (length {0}, need at least 2)")]
    SequenceTooShort(usize),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("fusion weight {0} outside [0, 1]")]
    InvalidFusionWeight(f64),

    #[error("sentence {0} is not enrolled for every speaker")]
    UnknownSentence(u32),

    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
