//! Multi-trial multivariate spectral estimation.
//!
//! The central estimator is a frequency-specific convex combination of a
//! parametric VAR spectrum and a PURE-smoothed periodogram, with the weight
//! at each frequency estimated from windowed plug-in risk terms. Partial
//! coherence, band summaries, jackknife inference and a seeded Monte Carlo
//! comparison harness are built on top.

pub mod connectivity;
pub mod error;
pub mod multitaper;
pub mod parallel;
pub mod periodogram;
pub mod shrinkage;
pub mod simulation;
pub mod smoothing;
pub mod spectral;
pub mod timeseries;
pub mod var;

pub use error::{Error, Result};
pub use spectral::{CMatrix, EstimatorTag, FrequencyGrid, SpectralEstimate};
pub use timeseries::MultiTrialSeries;
