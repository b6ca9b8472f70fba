//! Seeded generators for the VAR(5) + VMA(1) mixture process, its exact
//! spectral matrix, and the Monte Carlo harness that compares estimators by
//! frequency-specific mean squared error.
//!
//! Innovations are drawn with `rand_distr::StandardNormal` from a
//! `ChaCha20Rng` seeded through [`derive_seed`], so every trial of every
//! replicate has its own reproducible stream regardless of evaluation order.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::connectivity::partial_coherence;
use crate::error::{Error, Result};
use crate::multitaper::{default_taper_grid, multitaper_estimator, pure_select_ntapers_with};
use crate::parallel;
use crate::periodogram::PeriodogramSet;
use crate::shrinkage::{generalized_shrinkage, shrinkage_diagnostics, DEFAULT_WINDOW};
use crate::smoothing::{default_span_grid, smoothed_from_periodograms, SpanSelection};
use crate::spectral::{hs_dist_sq, symmetrize, CMatrix, EstimatorTag, FrequencyGrid, SpectralEstimate};
use crate::timeseries::MultiTrialSeries;
use crate::var::{bic_select_order, fit_var_ls, var_spectrum, VarModel};

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `stream` of item `index` under `master`.
pub fn derive_seed(master: u64, index: u64, stream: u64) -> u64 {
    mix(mix(mix(master) ^ index) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

fn innovation_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !sigma.is_square() || sigma.nrows() == 0 {
        return Err(Error::Dimension("innovation covariance must be square".into()));
    }
    sigma
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidParameter("innovation covariance is not positive definite".into()))
}

fn draw(rng: &mut ChaCha20Rng, factor: &DMatrix<f64>) -> DVector<f64> {
    let e = DVector::from_fn(factor.nrows(), |_, _| StandardNormal.sample(rng));
    factor * e
}

/// Simulates `X(t) = Σ_k Φ_k X(t−k) + Z(t)` from a zero state, discarding
/// the first `burnin` samples. Returns a `P×T` channel-major block.
pub fn simulate_var(
    coefficients: &[DMatrix<f64>],
    sigma_z: &DMatrix<f64>,
    n_samples: usize,
    burnin: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let model = VarModel::new(coefficients.to_vec(), sigma_z.clone())?;
    let radius = model.spectral_radius();
    if radius >= 1.0 {
        return Err(Error::Unstable { radius });
    }
    let factor = innovation_factor(sigma_z)?;
    let p = model.dim();
    let k = model.order();
    let total = burnin + n_samples;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut history: Vec<DVector<f64>> = Vec::with_capacity(total);
    for t in 0..total {
        let mut x = draw(&mut rng, &factor);
        for lag in 1..=k.min(t) {
            x += &coefficients[lag - 1] * &history[t - lag];
        }
        history.push(x);
    }
    let mut out = vec![0.0; p * n_samples];
    for (t, x) in history[burnin..].iter().enumerate() {
        for ch in 0..p {
            out[ch * n_samples + t] = x[ch];
        }
    }
    Ok(out)
}

/// Simulates `X(t) = Z(t) + Θ₁ Z(t−1)` with one presample innovation.
pub fn simulate_vma(theta: &DMatrix<f64>, sigma_z: &DMatrix<f64>, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    if theta.shape() != sigma_z.shape() {
        return Err(Error::Dimension(format!(
            "theta is {:?} but sigma is {:?}",
            theta.shape(),
            sigma_z.shape()
        )));
    }
    let factor = innovation_factor(sigma_z)?;
    let p = theta.nrows();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut prev = draw(&mut rng, &factor);
    let mut out = vec![0.0; p * n_samples];
    for t in 0..n_samples {
        let z = draw(&mut rng, &factor);
        let x = &z + theta * &prev;
        for ch in 0..p {
            out[ch * n_samples + t] = x[ch];
        }
        prev = z;
    }
    Ok(out)
}

/// Mixture `c_MA·X_MA(t) + c_AR·X_AR(t)` of independent VMA(1) and VAR
/// components.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_trials: usize,
    pub n_samples: usize,
    pub sampling_rate: f64,
    pub ma_weight: f64,
    pub ar_weight: f64,
    pub theta: DMatrix<f64>,
    pub phis: Vec<DMatrix<f64>>,
    pub sigma_z: DMatrix<f64>,
    pub burnin: usize,
    pub seed: u64,
}

/// The 6×6 VMA block; `Θ₁` is two copies on the diagonal.
const THETA_BLOCK: [[f64; 6]; 6] = [
    [0.0, 0.20, 0.15, 0.15, 0.0, -0.15],
    [0.20, 0.0, -0.20, 0.0, 0.0, 0.0],
    [-0.15, 0.20, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.20, 0.15],
    [0.0, 0.0, 0.0, 0.20, 0.0, -0.20],
    [0.0, 0.0, 0.0, -0.15, 0.20, 0.0],
];

impl SimulationConfig {
    /// Twelve channels, 120 trials of 256 samples, weights 0.65/0.35.
    pub fn paper_defaults() -> Self {
        let p = 12;
        let theta = DMatrix::from_fn(p, p, |r, c| {
            if r / 6 == c / 6 {
                THETA_BLOCK[r % 6][c % 6]
            } else {
                0.0
            }
        });
        let eye = DMatrix::<f64>::identity(p, p);
        let phis = vec![
            &eye * 0.75,
            &eye * -0.20,
            DMatrix::zeros(p, p),
            &eye * -0.15,
            &eye * -0.05,
        ];
        Self {
            n_trials: 120,
            n_samples: 256,
            sampling_rate: 256.0,
            ma_weight: 0.65,
            ar_weight: 0.35,
            theta,
            phis,
            sigma_z: eye,
            burnin: 500,
            seed: 0,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.sigma_z.nrows()
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.n_samples)?.with_sampling_rate(self.sampling_rate)
    }

    pub fn ar_model(&self) -> Result<VarModel> {
        VarModel::new(self.phis.clone(), self.sigma_z.clone())
    }

    fn validate(&self) -> Result<()> {
        let p = self.n_channels();
        if self.n_trials == 0 || self.n_samples < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least one trial of T >= 2 samples, got N={} T={}",
                self.n_trials, self.n_samples
            )));
        }
        if self.theta.shape() != (p, p) {
            return Err(Error::Dimension("theta does not match innovation covariance".into()));
        }
        if !(self.ma_weight.is_finite() && self.ar_weight.is_finite()) {
            return Err(Error::InvalidParameter("mixture weights must be finite".into()));
        }
        Ok(())
    }
}

/// One trial of the mixture as a `P×T` block.
fn simulate_mixture_trial(config: &SimulationConfig, trial: usize) -> Result<Vec<f64>> {
    let t = config.n_samples;
    let ma = simulate_vma(&config.theta, &config.sigma_z, t, derive_seed(config.seed, trial as u64, 1))?;
    let ar = simulate_var(
        &config.phis,
        &config.sigma_z,
        t,
        config.burnin,
        derive_seed(config.seed, trial as u64, 2),
    )?;
    Ok(ma
        .iter()
        .zip(&ar)
        .map(|(m, a)| config.ma_weight * m + config.ar_weight * a)
        .collect())
}

/// `N` independent mixture trials.
pub fn simulate_mixture(config: &SimulationConfig) -> Result<MultiTrialSeries> {
    config.validate()?;
    let trials = parallel::try_map_indexed(config.n_trials, |n| simulate_mixture_trial(config, n))?;
    MultiTrialSeries::from_trials(trials, config.n_channels(), config.sampling_rate)
}

/// `(2π)⁻¹ (I + Θ e^{−iω}) Σ (I + Θ e^{−iω})*` on the grid.
pub fn vma_spectrum(theta: &DMatrix<f64>, sigma_z: &DMatrix<f64>, grid: &FrequencyGrid) -> Result<SpectralEstimate> {
    if theta.shape() != sigma_z.shape() || !theta.is_square() {
        return Err(Error::Dimension("theta and sigma must be square and equal-sized".into()));
    }
    let p = theta.nrows();
    let sigma = sigma_z.map(Complex64::from);
    let theta_c = theta.map(Complex64::from);
    let scale = Complex64::from(1.0 / (2.0 * PI));
    let matrices = (0..grid.len())
        .map(|j| {
            let e = Complex64::from_polar(1.0, -grid.omega(j));
            let b = CMatrix::identity(p, p) + &theta_c * e;
            symmetrize(&(&b * &sigma * b.adjoint())) * scale
        })
        .collect();
    SpectralEstimate::new(grid.clone(), matrices, EstimatorTag::Truth)
}

/// Exact spectrum of the mixture: `c_MA² f_MA(ω) + c_AR² f_AR(ω)`.
pub fn true_mixture_spectrum(config: &SimulationConfig, grid: &FrequencyGrid) -> Result<SpectralEstimate> {
    let ma = vma_spectrum(&config.theta, &config.sigma_z, grid)?;
    let ar = var_spectrum(&config.ar_model()?, grid)?;
    let (wm, wa) = (config.ma_weight.powi(2), config.ar_weight.powi(2));
    let matrices = ma
        .matrices()
        .iter()
        .zip(ar.matrices())
        .map(|(m, a)| m * Complex64::from(wm) + a * Complex64::from(wa))
        .collect();
    SpectralEstimate::new(grid.clone(), matrices, EstimatorTag::Truth)
}

/// Grid indices of local maxima of the VAR component's autospectrum,
/// channel 0.
pub fn var_peak_indices(config: &SimulationConfig, grid: &FrequencyGrid) -> Result<Vec<usize>> {
    let ar = var_spectrum(&config.ar_model()?, grid)?.autospectrum(0);
    Ok((0..ar.len())
        .filter(|&j| {
            let left = if j == 0 { ar[1] } else { ar[j - 1] };
            let right = if j + 1 == ar.len() { ar[j - 1] } else { ar[j + 1] };
            ar[j] > left && ar[j] > right
        })
        .collect())
}

/// An estimator entered in the Monte Carlo comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Competitor {
    /// Returns the true spectrum; its MSE is identically zero.
    Truth,
    RawMean,
    Var,
    Smoothed,
    Multitaper,
    Shrinkage { window: usize },
}

impl Competitor {
    pub fn label(&self) -> String {
        match self {
            Competitor::Truth => "truth".into(),
            Competitor::RawMean => "raw_mean".into(),
            Competitor::Var => "var".into(),
            Competitor::Smoothed => "smoothed".into(),
            Competitor::Multitaper => "multitaper".into(),
            Competitor::Shrinkage { window } if *window == DEFAULT_WINDOW => "shrinkage".into(),
            Competitor::Shrinkage { window } => format!("shrinkage_c{window}"),
        }
    }

    pub fn default_set() -> Vec<Competitor> {
        vec![
            Competitor::Truth,
            Competitor::Var,
            Competitor::Smoothed,
            Competitor::Multitaper,
            Competitor::Shrinkage { window: DEFAULT_WINDOW },
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub competitors: Vec<Competitor>,
    pub reps: usize,
    pub seed: u64,
    pub k_max: usize,
    pub span_grid: Option<Vec<usize>>,
    pub taper_grid: Option<Vec<usize>>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            competitors: Competitor::default_set(),
            reps: 20,
            seed: 0,
            k_max: 10,
            span_grid: None,
            taper_grid: None,
        }
    }
}

/// Monte Carlo averages, indexed `[competitor][frequency]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareResult {
    pub grid: FrequencyGrid,
    pub competitors: Vec<Competitor>,
    pub mse_spectral: Vec<Vec<f64>>,
    pub mse_pcoh: Vec<Vec<f64>>,
    /// Mean truncated weight for each shrinkage competitor, in the order
    /// they appear in `competitors`.
    pub mean_weight: Vec<(Competitor, Vec<f64>)>,
    pub var_orders: Vec<usize>,
    pub taper_counts: Vec<usize>,
}

impl CompareResult {
    /// Frequency-summed MSE of a competitor.
    pub fn integrated(&self, which: Competitor) -> Option<(f64, f64)> {
        let i = self.competitors.iter().position(|c| *c == which)?;
        Some((self.mse_spectral[i].iter().sum(), self.mse_pcoh[i].iter().sum()))
    }
}

struct ReplicateOutcome {
    spectral: Vec<Vec<f64>>,
    pcoh: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    var_order: usize,
    taper_count: usize,
}

fn run_replicate(
    config: &SimulationConfig,
    options: &CompareOptions,
    truth: &SpectralEstimate,
    truth_pc: &[DMatrix<f64>],
    rep: usize,
) -> Result<ReplicateOutcome> {
    let sim = SimulationConfig {
        seed: derive_seed(options.seed, rep as u64, 0x5EED),
        ..config.clone()
    };
    let data = simulate_mixture(&sim)?;
    let periodograms = PeriodogramSet::compute(&data)?;
    let needs = |f: fn(&Competitor) -> bool| options.competitors.iter().any(f);
    let any_shrink = needs(|c| matches!(c, Competitor::Shrinkage { .. }));

    let (var_est, var_order) = if any_shrink || needs(|c| *c == Competitor::Var) {
        let order = bic_select_order(&data, options.k_max).map_err(|e| e.at_stage("var order selection"))?;
        let model = fit_var_ls(&data, order).map_err(|e| e.at_stage("var fit"))?;
        (Some(var_spectrum(&model, &data.grid())?), order)
    } else {
        (None, 0)
    };
    let smoothed = if any_shrink || needs(|c| *c == Competitor::Smoothed) {
        let spans = options
            .span_grid
            .clone()
            .unwrap_or_else(|| default_span_grid(data.n_samples()));
        Some(smoothed_from_periodograms(&periodograms, &SpanSelection::Pure(spans)).map_err(|e| e.at_stage("smoothing"))?.0)
    } else {
        None
    };
    let (multitaper, taper_count) = if needs(|c| *c == Competitor::Multitaper) {
        let grid = options
            .taper_grid
            .clone()
            .unwrap_or_else(|| default_taper_grid(data.n_samples()));
        let sel = pure_select_ntapers_with(&data, &periodograms, &grid).map_err(|e| e.at_stage("taper selection"))?;
        (Some(multitaper_estimator(&data, sel.median)?), sel.median)
    } else {
        (None, 0)
    };

    let mut spectral = Vec::new();
    let mut pcoh = Vec::new();
    let mut weights = Vec::new();
    for comp in &options.competitors {
        let est = match comp {
            Competitor::Truth => truth.clone(),
            Competitor::RawMean => periodograms.mean().clone(),
            Competitor::Var => var_est.clone().expect("computed"),
            Competitor::Smoothed => smoothed.clone().expect("computed"),
            Competitor::Multitaper => multitaper.clone().expect("computed"),
            Competitor::Shrinkage { window } => {
                let v = var_est.as_ref().expect("computed");
                let f = smoothed.as_ref().expect("computed");
                let diag = shrinkage_diagnostics(v, f, periodograms.mean(), *window)
                    .map_err(|e| e.at_stage("risk estimation"))?;
                let est = generalized_shrinkage(v, f, &diag.weight)?;
                weights.push(diag.weight);
                est
            }
        };
        spectral.push(
            est.matrices()
                .iter()
                .zip(truth.matrices())
                .map(|(a, b)| hs_dist_sq(a, b))
                .collect(),
        );
        let pc = partial_coherence(&est).map_err(|e| e.at_stage("partial coherence"))?;
        pcoh.push(
            pc.matrices
                .iter()
                .zip(truth_pc)
                .map(|(a, b)| (a - b).norm_squared() / a.nrows() as f64)
                .collect(),
        );
    }
    Ok(ReplicateOutcome {
        spectral,
        pcoh,
        weights,
        var_order,
        taper_count,
    })
}

/// Simulates `reps` datasets, runs every competitor on each and averages
/// the per-frequency squared Hilbert–Schmidt errors of the spectral matrix
/// and of the partial-coherence matrix.
pub fn monte_carlo_compare(config: &SimulationConfig, options: &CompareOptions) -> Result<CompareResult> {
    if options.reps == 0 {
        return Err(Error::InvalidParameter("need at least one replicate".into()));
    }
    if options.competitors.is_empty() {
        return Err(Error::InvalidParameter("no estimators to compare".into()));
    }
    config.validate()?;
    let grid = config.grid()?;
    let truth = true_mixture_spectrum(config, &grid)?;
    let truth_pc = partial_coherence(&truth)?.matrices;
    let outcomes = parallel::try_map_indexed(options.reps, |rep| {
        run_replicate(config, options, &truth, &truth_pc, rep).map_err(|e| Error::Replicate {
            index: rep,
            source: Box::new(e),
        })
    })?;

    let reps = options.reps as f64;
    let average = |pick: &dyn Fn(&ReplicateOutcome) -> &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let first = pick(&outcomes[0]);
        let mut acc = vec![vec![0.0; grid.len()]; first.len()];
        for o in &outcomes {
            for (a, row) in acc.iter_mut().zip(pick(o)) {
                a.iter_mut().zip(row).for_each(|(x, y)| *x += y);
            }
        }
        acc.iter_mut().flatten().for_each(|x| *x /= reps);
        acc
    };
    let mse_spectral = average(&|o| &o.spectral);
    let mse_pcoh = average(&|o| &o.pcoh);
    let weight_curves = average(&|o| &o.weights);
    let shrink: Vec<Competitor> = options
        .competitors
        .iter()
        .copied()
        .filter(|c| matches!(c, Competitor::Shrinkage { .. }))
        .collect();
    Ok(CompareResult {
        grid,
        competitors: options.competitors.clone(),
        mse_spectral,
        mse_pcoh,
        mean_weight: shrink.into_iter().zip(weight_curves).collect(),
        var_orders: outcomes.iter().map(|o| o.var_order).collect(),
        taper_counts: outcomes.iter().map(|o| o.taper_count).collect(),
    })
}
