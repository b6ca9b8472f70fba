//! Sine-taper multitaper estimator, used as a nonparametric competitor.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::parallel;
use crate::periodogram::{add_outer, HalfDft, PeriodogramSet};
use crate::smoothing::{argmin_first, default_span_grid, hann_weights, loo_pilot};
use crate::spectral::{hs_dist_sq, CMatrix, EstimatorTag, SpectralEstimate};
use crate::timeseries::MultiTrialSeries;

/// Orthonormal sine tapers `u_a(t) = √(2/(T+1)) sin(πat/(T+1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaperBank {
    n_samples: usize,
    tapers: Vec<Vec<f64>>,
}

impl TaperBank {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn len(&self) -> usize {
        self.tapers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tapers.is_empty()
    }

    pub fn taper(&self, a: usize) -> &[f64] {
        &self.tapers[a]
    }
}

pub fn sine_tapers(n_samples: usize, count: usize) -> Result<TaperBank> {
    if count == 0 || count >= n_samples {
        return Err(Error::InvalidParameter(format!(
            "number of tapers must satisfy 1 <= m < T, got m={count}, T={n_samples}"
        )));
    }
    let norm = (2.0 / (n_samples as f64 + 1.0)).sqrt();
    let tapers = (1..=count)
        .map(|a| {
            (1..=n_samples)
                .map(|t| norm * (PI * (a * t) as f64 / (n_samples as f64 + 1.0)).sin())
                .collect()
        })
        .collect();
    Ok(TaperBank { n_samples, tapers })
}

/// Running multitaper sums for one trial: entry `[a][j]` holds the
/// estimate using the first `a + 1` tapers at frequency `j`.
fn cumulative_trial_estimates(
    dft: &HalfDft,
    bank: &TaperBank,
    block: &[f64],
    n_channels: usize,
    keep: &[usize],
) -> Vec<Vec<CMatrix>> {
    let n_freq = dft.n_samples() / 2 + 1;
    let mut running = vec![CMatrix::zeros(n_channels, n_channels); n_freq];
    let mut out = Vec::with_capacity(keep.len());
    for a in 0..bank.len() {
        let d = dft.transform_block(block, n_channels, Some(bank.taper(a)));
        for (acc, dj) in running.iter_mut().zip(&d) {
            add_outer(acc, dj, 1.0);
        }
        if keep.contains(&(a + 1)) {
            let inv = Complex64::from(1.0 / (a + 1) as f64);
            out.push(running.iter().map(|m| m * inv).collect());
        }
    }
    out
}

/// Per-trial sine-multitaper estimates averaged over trials.
pub fn multitaper_estimator(trials: &MultiTrialSeries, count: usize) -> Result<SpectralEstimate> {
    let t = trials.n_samples();
    let bank = sine_tapers(t, count)?;
    let dft = HalfDft::new(t);
    let p = trials.n_channels();
    let per_trial = parallel::map_indexed(trials.n_trials(), |n| {
        cumulative_trial_estimates(&dft, &bank, trials.trial(n), p, &[count])
            .pop()
            .expect("requested count")
    });
    let inv = Complex64::from(1.0 / trials.n_trials() as f64);
    let grid = trials.grid();
    let matrices = (0..grid.len())
        .map(|j| {
            let mut acc = per_trial[0][j].clone();
            for est in &per_trial[1..] {
                acc += &est[j];
            }
            acc * inv
        })
        .collect();
    SpectralEstimate::new(grid, matrices, EstimatorTag::Multitaper)
}

/// Outcome of PURE taper-count selection.
#[derive(Debug, Clone, PartialEq)]
pub struct TaperSelection {
    pub per_trial: Vec<usize>,
    /// Lower median of `per_trial`; always a member of the candidate grid.
    pub median: usize,
}

/// PURE risks of trial `n` for every count in `m_grid` (grid order).
pub fn taper_risks(
    trials: &MultiTrialSeries,
    periodograms: &PeriodogramSet,
    n: usize,
    m_grid: &[usize],
) -> Result<Vec<f64>> {
    if m_grid.is_empty() {
        return Err(Error::InvalidParameter("empty taper grid".into()));
    }
    let t = trials.n_samples();
    let max_m = *m_grid.iter().max().expect("nonempty");
    let bank = sine_tapers(t, max_m)?;
    if m_grid.contains(&0) {
        return Err(Error::InvalidParameter("taper count 0 in grid".into()));
    }
    let pilot = loo_pilot(periodograms, n)?;
    let mut sorted = m_grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let estimates = cumulative_trial_estimates(
        &HalfDft::new(t),
        &bank,
        trials.trial(n),
        trials.n_channels(),
        &sorted,
    );
    let dw = 2.0 * PI / t as f64;
    Ok(m_grid
        .iter()
        .map(|m| {
            let est = &estimates[sorted.binary_search(m).expect("present")];
            est.iter().zip(&pilot).map(|(a, b)| hs_dist_sq(a, b)).sum::<f64>() * dw
        })
        .collect())
}

/// Per-trial taper counts minimizing the leave-one-out PURE risk; ties go
/// to the smaller count.
pub fn pure_select_ntapers_with(
    trials: &MultiTrialSeries,
    periodograms: &PeriodogramSet,
    m_grid: &[usize],
) -> Result<TaperSelection> {
    if trials.n_trials() < 2 {
        return Err(Error::InsufficientTrials {
            required: 2,
            got: trials.n_trials(),
        });
    }
    let mut sorted = m_grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let per_trial = parallel::try_map_indexed(trials.n_trials(), |n| {
        let risks = taper_risks(trials, periodograms, n, &sorted)?;
        Ok::<_, Error>(sorted[argmin_first(&risks)])
    })?;
    let mut ordered = per_trial.clone();
    ordered.sort_unstable();
    let median = ordered[(ordered.len() - 1) / 2];
    Ok(TaperSelection { per_trial, median })
}

pub fn pure_select_ntapers(trials: &MultiTrialSeries, m_grid: &[usize]) -> Result<TaperSelection> {
    pure_select_ntapers_with(trials, &PeriodogramSet::compute(trials)?, m_grid)
}

/// Taper counts `1..=m_max`, where `m_max` is the equivalent noise
/// bandwidth (in bins) of the widest span in [`default_span_grid`], so both
/// nonparametric competitors search the same range of variance reduction.
pub fn default_taper_grid(n_samples: usize) -> Vec<usize> {
    let widest = default_span_grid(n_samples).last().copied().unwrap_or(1);
    let enbw = 1.0 / hann_weights(widest).expect("odd span").iter().map(|w| w * w).sum::<f64>();
    let top = (enbw.floor() as usize).clamp(1, n_samples.saturating_sub(1).max(1));
    (1..=top).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{validate_spectral, Tolerance};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(seed: u64, n: usize, p: usize, t: usize) -> MultiTrialSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trials = (0..n)
            .map(|_| (0..p * t).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        MultiTrialSeries::from_trials(trials, p, 1.0).unwrap()
    }

    #[test]
    fn tapers_are_orthonormal() {
        for (t, m) in [(4usize, 1usize), (17, 5), (256, 16)] {
            let bank = sine_tapers(t, m).unwrap();
            for a in 0..m {
                for b in 0..m {
                    let dot: f64 = bank.taper(a).iter().zip(bank.taper(b)).map(|(x, y)| x * y).sum();
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(dot, expect, epsilon = 1e-10);
                }
            }
        }
        let bank = sine_tapers(4, 1).unwrap();
        for t in 1..=4 {
            let expect = (0.4f64).sqrt() * (PI * t as f64 / 5.0).sin();
            assert_abs_diff_eq!(bank.taper(0)[t - 1], expect, epsilon = 1e-15);
        }
        assert!(sine_tapers(4, 4).is_err());
        assert!(sine_tapers(4, 0).is_err());
    }

    #[test]
    fn degenerate_inputs() {
        let zero = MultiTrialSeries::from_trials(vec![vec![0.0; 32]], 1, 1.0).unwrap();
        let est = multitaper_estimator(&zero, 3).unwrap();
        assert!(est.matrices().iter().all(|m| m[(0, 0)].norm() == 0.0));

        let one = white(1, 1, 2, 32);
        let est = multitaper_estimator(&one, 1).unwrap();
        let bank = sine_tapers(32, 1).unwrap();
        let dft = HalfDft::new(32);
        let d = dft.transform_block(one.trial(0), 2, Some(bank.taper(0)));
        for (j, m) in est.matrices().iter().enumerate() {
            let expect = d[j][0] * d[j][1].conj();
            assert_abs_diff_eq!((m[(0, 1)] - expect).norm(), 0.0, epsilon = 1e-14);
            assert!(validate_spectral(m, Tolerance::default()).passed());
        }
    }

    #[test]
    fn white_noise_level() {
        let s = white(77, 400, 1, 256);
        let est = multitaper_estimator(&s, 5).unwrap();
        let level = 1.0 / (2.0 * PI);
        for m in &est.matrices()[1..128] {
            assert!((m[(0, 0)].re - level).abs() < 0.1 * level);
        }
    }

    #[test]
    fn variance_drops_with_taper_count() {
        let mut var = [0.0; 3];
        for seed in 0..8 {
            let s = white(500 + seed, 1, 1, 256);
            for (k, m) in [1usize, 5, 15].into_iter().enumerate() {
                let est = multitaper_estimator(&s, m).unwrap();
                let vals: Vec<f64> = est.matrices()[10..118].iter().map(|x| x[(0, 0)].re).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                var[k] += vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            }
        }
        assert!(var[0] > var[1] && var[1] > var[2], "{var:?}");
    }

    #[test]
    fn selection_is_exhaustive_argmin() {
        let s = white(3, 5, 2, 64);
        let set = PeriodogramSet::compute(&s).unwrap();
        let grid = default_taper_grid(64);
        let sel = pure_select_ntapers_with(&s, &set, &grid).unwrap();
        for n in 0..5 {
            let risks = taper_risks(&s, &set, n, &grid).unwrap();
            let best = risks.iter().copied().fold(f64::INFINITY, f64::min);
            let idx = grid.iter().position(|&m| m == sel.per_trial[n]).unwrap();
            assert_eq!(risks[idx], best);
            assert!(risks[..idx].iter().all(|r| *r > best));
        }
        assert!(grid.contains(&sel.median));
        assert_eq!(default_taper_grid(256).last(), Some(&42));
        assert_eq!(default_taper_grid(8), vec![1]);
        assert_eq!(pure_select_ntapers_with(&s, &set, &[4]).unwrap().median, 4);
        assert!(pure_select_ntapers_with(&s, &set, &[]).is_err());
    }
}
