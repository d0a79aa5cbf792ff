use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("mode-count mismatch: model has {expected} mode(s), got {got}")]
    ModeMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("trajectory escaped at t = {t}: |component| = {magnitude:e}")]
    Escape { t: f64, magnitude: f64 },

    #[error("non-finite derivative at t = {t}")]
    NonFinite { t: f64 },

    #[error("step budget of {max_steps} exhausted")]
    MaxSteps { max_steps: usize },

    #[error("no guess converged; best residual {best_residual:e}")]
    NoConvergence { best_residual: f64 },

    #[error("focal point: block determinant {det:e} below threshold")]
    FocalPoint { det: f64 },

    #[error("square-root branch jump of {jump:.3} rad between consecutive samples")]
    BranchJump { jump: f64 },

    #[error("purity pipeline inconsistency: imaginary residue {imag:e}")]
    PipelineInconsistency { imag: f64 },

    #[error("Fock cutoff {n_cut} too small: truncated tail {tail:e}")]
    InsufficientCutoff { n_cut: usize, tail: f64 },

    #[error("quadratic form not convergent: smallest real eigenvalue {min_eig:e}")]
    Nonconvergent { min_eig: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short snake-case tag, used in CSV status columns.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ModeMismatch { .. } => "mode_mismatch",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Escape { .. } => "escape",
            Error::NonFinite { .. } => "non_finite",
            Error::MaxSteps { .. } => "max_steps",
            Error::NoConvergence { .. } => "no_convergence",
            Error::FocalPoint { .. } => "focal_point",
            Error::BranchJump { .. } => "branch_jump",
            Error::PipelineInconsistency { .. } => "pipeline_inconsistency",
            Error::InsufficientCutoff { .. } => "insufficient_cutoff",
            Error::Nonconvergent { .. } => "nonconvergent",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
