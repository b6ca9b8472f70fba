use thiserror::Error;

/// Errors raised by the estimators and their supporting routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("at least {required} trials required, got {got}")]
    InsufficientTrials { required: usize, got: usize },

    #[error("degenerate channel {channel} in trial {trial}: zero variance")]
    DegenerateChannel { trial: usize, channel: usize },

    #[error("zero autospectrum for channel {channel} at frequency index {freq}")]
    ZeroAutospectrum { channel: usize, freq: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rank-deficient regressor Gram matrix (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("transfer matrix singular at omega = {omega:.6} (near unit root)")]
    NearUnitRoot { omega: f64 },

    #[error("spectral matrix ill-conditioned at omega = {omega:.6}: condition number {condition:.3e}")]
    IllConditioned { omega: f64, condition: f64 },

    #[error("unstable VAR model: companion spectral radius {radius:.6}")]
    Unstable { radius: f64 },

    #[error("no Fourier frequencies in band [{lo} Hz, {hi} Hz]")]
    EmptyBand { lo: f64, hi: f64 },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("replicate {index}: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
