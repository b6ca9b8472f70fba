use nalgebra::DMatrix;
use num_complex::Complex64;

use spectral_shrinkage::connectivity::{band_average, partial_coherence, Band};
use spectral_shrinkage::multitaper::{default_taper_grid, pure_select_ntapers};
use spectral_shrinkage::periodogram::PeriodogramSet;
use spectral_shrinkage::shrinkage::{full_pipeline, PipelineOptions, WeightMode};
use spectral_shrinkage::simulation::{
    derive_seed, simulate_mixture, simulate_var, true_mixture_spectrum, var_peak_indices, SimulationConfig,
};
use spectral_shrinkage::spectral::{hs_norm_sq, Tolerance};
use spectral_shrinkage::{Error, MultiTrialSeries};

fn hs_dist(a: &spectral_shrinkage::CMatrix, b: &spectral_shrinkage::CMatrix) -> f64 {
    hs_norm_sq(&(a - b)).unwrap()
}

fn var_trials(coefs: &[DMatrix<f64>], n: usize, t: usize, seed: u64) -> MultiTrialSeries {
    let p = coefs[0].nrows();
    let trials = (0..n)
        .map(|i| simulate_var(coefs, &DMatrix::identity(p, p), t, 300, derive_seed(seed, i as u64, 0)).unwrap())
        .collect();
    MultiTrialSeries::from_trials(trials, p, 1.0).unwrap()
}

#[test]
fn generator_matches_true_spectrum_over_500_trials() {
    let mut cfg = SimulationConfig::paper_defaults();
    cfg.n_trials = 500;
    cfg.seed = 2024;
    let data = simulate_mixture(&cfg).unwrap();
    let mean = PeriodogramSet::compute(&data).unwrap().mean().clone();
    let truth = true_mixture_spectrum(&cfg, &data.grid()).unwrap();
    let (mut err, mut norm) = (0.0, 0.0);
    for j in 1..128 {
        err += hs_dist(mean.at(j), truth.at(j));
        norm += hs_norm_sq(truth.at(j)).unwrap();
    }
    assert!(err / norm < 0.05, "relative integrated error {}", err / norm);
}

#[test]
fn pipeline_on_mixture_tracks_the_var_peak() {
    let mut cfg = SimulationConfig::paper_defaults();
    cfg.seed = 99;
    let data = simulate_mixture(&cfg).unwrap();
    let out = full_pipeline(&data, &PipelineOptions::default()).unwrap();
    assert_eq!(out.var_model.order(), 5);
    assert_eq!(out.bic.len(), 10);

    for (j, m) in out.estimate.matrices().iter().enumerate() {
        let w = Complex64::from(out.diagnostics.weight[j]);
        let expect = out.var_estimate.at(j) * w + out.smoothed.at(j) * (Complex64::from(1.0) - w);
        assert!(hs_dist(m, &expect) <= 1e-24 * hs_norm_sq(m).unwrap().max(1.0));
    }
    for r in out.estimate.validate(Tolerance::default()) {
        assert!(r.passed(), "{r:?}");
    }
    for &peak in &var_peak_indices(&cfg, &data.grid()).unwrap() {
        let near: f64 = out.diagnostics.weight[peak - 2..=peak + 2].iter().sum::<f64>() / 5.0;
        assert!(near > 0.5, "weight near bin {peak} is {near}");
    }
    let w = &out.diagnostics;
    assert!(w.alpha2.iter().chain(&w.beta2).chain(&w.delta2).all(|v| *v >= 0.0));
    assert!(w.weight.iter().zip(&w.weight_raw).all(|(c, r)| *c == r.clamp(0.0, 1.0)));
}

#[test]
fn partial_coherence_of_the_mixture_truth_has_block_structure() {
    let cfg = SimulationConfig::paper_defaults();
    let truth = true_mixture_spectrum(&cfg, &cfg.grid().unwrap()).unwrap();
    let pc = partial_coherence(&truth).unwrap();
    for band in [Band::alpha(), Band::beta()] {
        let avg = band_average(&pc, &band).unwrap();
        // the two 6-channel VMA blocks never interact
        for a in 0..6 {
            for b in 6..12 {
                assert!(avg.matrix[(a, b)] < 1e-20, "{} ({a},{b})", band.name);
            }
        }
        assert!(avg.matrix[(0, 1)] > 1e-3);
    }
}

#[test]
fn taper_selection_prefers_more_tapers_for_flat_spectra() {
    let white = [DMatrix::zeros(2, 2)];
    let (r, theta) = (0.95f64, 0.6f64);
    let peaked = [
        DMatrix::identity(2, 2) * (2.0 * r * theta.cos()),
        DMatrix::identity(2, 2) * -(r * r),
    ];
    let grid = default_taper_grid(256);
    let (mut flat, mut sharp) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        flat.push(pure_select_ntapers(&var_trials(&white, 20, 256, seed), &grid).unwrap().median);
        sharp.push(pure_select_ntapers(&var_trials(&peaked, 20, 256, 1000 + seed), &grid).unwrap().median);
    }
    flat.sort_unstable();
    sharp.sort_unstable();
    assert!(flat[10] > sharp[10], "white {flat:?} peaked {sharp:?}");
}

#[test]
fn fixed_unit_weight_reproduces_the_var_spectrum() {
    let mut cfg = SimulationConfig::paper_defaults();
    cfg.n_trials = 20;
    cfg.n_samples = 128;
    cfg.seed = 5;
    let data = simulate_mixture(&cfg).unwrap();
    let opts = PipelineOptions {
        weight: WeightMode::Fixed(1.0),
        ..Default::default()
    };
    let out = full_pipeline(&data, &opts).unwrap();
    assert_eq!(out.estimate.matrices(), out.var_estimate.matrices());
}

#[test]
fn errors_name_the_failing_stage() {
    let data = var_trials(&[DMatrix::zeros(2, 2)], 3, 16, 1);
    let opts = PipelineOptions {
        window: 4,
        ..Default::default()
    };
    let err = full_pipeline(&data, &opts).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "options", .. }), "{err:?}");
    assert!(err.to_string().starts_with("options:"));

    let one = data.select_trials(&[0]).unwrap();
    assert!(matches!(
        full_pipeline(&one, &PipelineOptions::default()),
        Err(Error::InsufficientTrials { required: 2, got: 1 })
    ));
}
