use thiserror::Error;

/// Errors produced across the watermarking pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("conjugate symmetry violated: imaginary residue {residue:e} exceeds {tolerance:e}")]
    SymmetryViolation { residue: f64, tolerance: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("template geometry degenerate: only {points} distinct points after rounding")]
    GeometryDegenerate { points: usize },

    #[error("no template found: magnitude map is flat")]
    NoTemplate,

    #[error("calibration too imprecise: {trials} trials for fpr {fpr} (need trials * fpr >= 100)")]
    CalibrationPrecision { trials: usize, fpr: f64 },

    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
