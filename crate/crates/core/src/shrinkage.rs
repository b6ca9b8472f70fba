//! Frequency-specific shrinkage between the parametric VAR spectrum `Ṽ` and
//! the smoothed periodogram `f̃`.
//!
//! With `f̂⁰` the trial-averaged raw periodogram, the risk terms at each
//! frequency are windowed plug-in estimates over `C_T` neighbouring Fourier
//! frequencies:
//!
//! ```text
//! α̂²(ω) = C⁻¹ Σ_k ‖Ṽ(ω) − f̂⁰(ω+ω_k)‖²
//! β̂²(ω) = C⁻¹ Σ_k ‖f̃(ω) − f̂⁰(ω+ω_k)‖²
//! δ̂²(ω) = ½ C⁻¹ Σ_k (‖f̃(ω+ω_k) − Ṽ(ω)‖² + ‖Ṽ(ω+ω_k) − f̃(ω)‖²)
//! Ŵ(ω)  = (β̂² − ½(α̂² + β̂² − δ̂²)) / δ̂²,  truncated to [0, 1]
//! f̂*(ω) = Ŵ(ω) Ṽ(ω) + (1 − Ŵ(ω)) f̃(ω)
//! ```

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::periodogram::PeriodogramSet;
use crate::smoothing::{default_span_grid, smoothed_from_periodograms, SmoothingConfig, SpanSelection};
use crate::spectral::{hs_dist_sq, EstimatorTag, FrequencyGrid, SpectralEstimate};
use crate::timeseries::MultiTrialSeries;
use crate::var::{bic_curve, fit_var_ls, var_spectrum, VarModel};

/// Default risk window `C_T`.
pub const DEFAULT_WINDOW: usize = 15;

fn check_window(window: usize, grid: &FrequencyGrid) -> Result<()> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "risk window C_T must be odd and >= 1, got {window}"
        )));
    }
    if window >= grid.n_samples() {
        return Err(Error::InvalidParameter(format!(
            "risk window C_T = {window} must be smaller than T = {}",
            grid.n_samples()
        )));
    }
    Ok(())
}

/// `C⁻¹ Σ_k ‖center(ω_j) − other(ω_{j+k})‖²` at every grid frequency.
fn windowed_distance(center: &SpectralEstimate, other: &SpectralEstimate, window: usize) -> Result<Vec<f64>> {
    center.check_compatible(other)?;
    check_window(window, center.grid())?;
    let half = (window as isize - 1) / 2;
    let inv = 1.0 / window as f64;
    Ok((0..center.len())
        .map(|j| {
            (-half..=half)
                .map(|k| hs_dist_sq(center.at(j), &other.folded(j, k)))
                .sum::<f64>()
                * inv
        })
        .collect())
}

/// `α̂²(ω)`: windowed distance between the VAR spectrum and `f̂⁰`.
pub fn estimate_alpha2(var_est: &SpectralEstimate, mean_pgram: &SpectralEstimate, window: usize) -> Result<Vec<f64>> {
    windowed_distance(var_est, mean_pgram, window)
}

/// `β̂²(ω)`: windowed distance between the smoothed periodogram and `f̂⁰`.
pub fn estimate_beta2(smoothed: &SpectralEstimate, mean_pgram: &SpectralEstimate, window: usize) -> Result<Vec<f64>> {
    windowed_distance(smoothed, mean_pgram, window)
}

/// `δ̂²(ω)`: symmetrized windowed distance between the two estimators.
pub fn estimate_delta2(smoothed: &SpectralEstimate, var_est: &SpectralEstimate, window: usize) -> Result<Vec<f64>> {
    let a = windowed_distance(var_est, smoothed, window)?;
    let b = windowed_distance(smoothed, var_est, window)?;
    Ok(a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect())
}

/// Raw plug-in weight and its truncation to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight {
    pub raw: f64,
    pub clamped: f64,
}

/// `W = (β² − ½(α² + β² − δ²)) / δ²`. When `δ² = 0` the two estimators
/// agree and the weight is defined as 0.
pub fn shrinkage_weight(alpha2: f64, beta2: f64, delta2: f64) -> Weight {
    if delta2 == 0.0 {
        return Weight { raw: 0.0, clamped: 0.0 };
    }
    let raw = (beta2 - 0.5 * (alpha2 + beta2 - delta2)) / delta2;
    Weight {
        raw,
        clamped: raw.clamp(0.0, 1.0),
    }
}

/// Per-frequency risk terms and weights behind a shrinkage estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageDiagnostics {
    pub grid: FrequencyGrid,
    pub window: usize,
    pub alpha2: Vec<f64>,
    pub beta2: Vec<f64>,
    pub delta2: Vec<f64>,
    pub weight_raw: Vec<f64>,
    pub weight: Vec<f64>,
}

/// Estimates every risk term and the weight curve.
pub fn shrinkage_diagnostics(
    var_est: &SpectralEstimate,
    smoothed: &SpectralEstimate,
    mean_pgram: &SpectralEstimate,
    window: usize,
) -> Result<ShrinkageDiagnostics> {
    let alpha2 = estimate_alpha2(var_est, mean_pgram, window)?;
    let beta2 = estimate_beta2(smoothed, mean_pgram, window)?;
    let delta2 = estimate_delta2(smoothed, var_est, window)?;
    let weights: Vec<Weight> = alpha2
        .iter()
        .zip(&beta2)
        .zip(&delta2)
        .map(|((&a, &b), &d)| shrinkage_weight(a, b, d))
        .collect();
    Ok(ShrinkageDiagnostics {
        grid: var_est.grid().clone(),
        window,
        alpha2,
        beta2,
        delta2,
        weight_raw: weights.iter().map(|w| w.raw).collect(),
        weight: weights.iter().map(|w| w.clamped).collect(),
    })
}

/// `f̂*(ω) = W(ω) Ṽ(ω) + (1 − W(ω)) f̃(ω)`.
pub fn generalized_shrinkage(
    var_est: &SpectralEstimate,
    smoothed: &SpectralEstimate,
    weights: &[f64],
) -> Result<SpectralEstimate> {
    var_est.check_compatible(smoothed)?;
    if weights.len() != var_est.len() {
        return Err(Error::Dimension(format!(
            "{} weights for {} frequencies",
            weights.len(),
            var_est.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::Domain(format!("shrinkage weight {w} outside [0, 1]")));
    }
    let matrices = var_est
        .matrices()
        .iter()
        .zip(smoothed.matrices())
        .zip(weights)
        .map(|((v, f), &w)| {
            if w == 1.0 {
                v.clone()
            } else if w == 0.0 {
                f.clone()
            } else {
                v * Complex64::from(w) + f * Complex64::from(1.0 - w)
            }
        })
        .collect();
    SpectralEstimate::new(var_est.grid().clone(), matrices, EstimatorTag::Shrinkage)
}

/// How the VAR order is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderSelection {
    Bic { k_max: usize },
    Fixed(usize),
}

/// How the shrinkage weight is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMode {
    Estimated,
    /// Same weight at every frequency; risk terms are still reported.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub order: OrderSelection,
    /// `None` selects PURE over the default span grid for the data length.
    pub spans: Option<SpanSelection>,
    pub window: usize,
    pub weight: WeightMode,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            order: OrderSelection::Bic { k_max: 10 },
            spans: None,
            window: DEFAULT_WINDOW,
            weight: WeightMode::Estimated,
        }
    }
}

/// Every artifact produced on the way to `f̂*`.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub estimate: SpectralEstimate,
    pub diagnostics: ShrinkageDiagnostics,
    pub var_model: VarModel,
    /// IC values for orders `1..=k_max`; empty when the order was fixed.
    pub bic: Vec<f64>,
    pub var_estimate: SpectralEstimate,
    pub smoothed: SpectralEstimate,
    pub smoothing: SmoothingConfig,
    pub mean_periodogram: SpectralEstimate,
}

/// Runs BIC → VAR fit → `Ṽ`, PURE spans → `f̃`, `f̂⁰`, risk terms, weights
/// and the combined estimate.
pub fn full_pipeline(trials: &MultiTrialSeries, options: &PipelineOptions) -> Result<PipelineOutput> {
    let periodograms = PeriodogramSet::compute(trials).map_err(|e| e.at_stage("periodogram"))?;
    pipeline_with_periodograms(trials, &periodograms, options)
}

/// [`full_pipeline`] reusing periodograms already computed for `trials`.
pub fn pipeline_with_periodograms(
    trials: &MultiTrialSeries,
    periodograms: &PeriodogramSet,
    options: &PipelineOptions,
) -> Result<PipelineOutput> {
    if trials.n_trials() < 2 {
        return Err(Error::InsufficientTrials {
            required: 2,
            got: trials.n_trials(),
        });
    }
    let grid = trials.grid();
    check_window(options.window, &grid).map_err(|e| e.at_stage("options"))?;
    if let WeightMode::Fixed(w) = options.weight {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Domain(format!("fixed weight {w} outside [0, 1]")).at_stage("options"));
        }
    }

    let (order, bic) = match options.order {
        OrderSelection::Fixed(k) => (k, Vec::new()),
        OrderSelection::Bic { k_max } => {
            let ic = bic_curve(trials, k_max).map_err(|e| e.at_stage("var order selection"))?;
            (crate::smoothing::argmin_first(&ic) + 1, ic)
        }
    };
    let var_model = fit_var_ls(trials, order).map_err(|e| e.at_stage("var fit"))?;
    let var_estimate = var_spectrum(&var_model, &grid).map_err(|e| e.at_stage("var spectrum"))?;

    let selection = options
        .spans
        .clone()
        .unwrap_or_else(|| SpanSelection::Pure(default_span_grid(trials.n_samples())));
    let (smoothed, smoothing) =
        smoothed_from_periodograms(periodograms, &selection).map_err(|e| e.at_stage("smoothing"))?;

    let mean_periodogram = periodograms.mean().clone();
    let mut diagnostics = shrinkage_diagnostics(&var_estimate, &smoothed, &mean_periodogram, options.window)
        .map_err(|e| e.at_stage("risk estimation"))?;
    if let WeightMode::Fixed(w) = options.weight {
        diagnostics.weight_raw = vec![w; grid.len()];
        diagnostics.weight = vec![w; grid.len()];
    }
    let estimate = generalized_shrinkage(&var_estimate, &smoothed, &diagnostics.weight)
        .map_err(|e| e.at_stage("combination"))?;
    Ok(PipelineOutput {
        estimate,
        diagnostics,
        var_model,
        bic,
        var_estimate,
        smoothed,
        smoothing,
        mean_periodogram,
    })
}
