//! Discrete Fourier transforms and raw periodogram matrices.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::parallel;
use crate::spectral::{CMatrix, EstimatorTag, FrequencyGrid, SpectralEstimate};
use crate::timeseries::MultiTrialSeries;

/// Half-grid DFT `d(ω_j) = (2π)^{-1/2} Σ_{t=1}^{T} x(t) e^{−iω_j t}` for
/// `j = 0..=⌊T/2⌋`, with a reusable FFT plan.
#[derive(Clone)]
pub struct HalfDft {
    fft: Arc<dyn Fft<f64>>,
    n_samples: usize,
    phase: Vec<Complex64>,
}

impl std::fmt::Debug for HalfDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HalfDft").field("n_samples", &self.n_samples).finish()
    }
}

impl HalfDft {
    pub fn new(n_samples: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n_samples);
        let norm = (2.0 * PI).sqrt().recip();
        // the FFT indexes time from 0; shifting to t = 1..T multiplies by e^{-iω}
        let phase = (0..=n_samples / 2)
            .map(|j| Complex64::from_polar(norm, -2.0 * PI * j as f64 / n_samples as f64))
            .collect();
        Self {
            fft,
            n_samples,
            phase,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Transforms `x` (length `T`) after multiplying by `taper` when given.
    pub fn transform(&self, x: &[f64], taper: Option<&[f64]>) -> Vec<Complex64> {
        debug_assert_eq!(x.len(), self.n_samples);
        let mut buf: Vec<Complex64> = match taper {
            Some(w) => x.iter().zip(w).map(|(v, w)| Complex64::new(v * w, 0.0)).collect(),
            None => x.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        };
        self.fft.process(&mut buf);
        buf.truncate(self.phase.len());
        buf.iter_mut().zip(&self.phase).for_each(|(z, p)| *z *= p);
        buf
    }

    /// DFTs of every channel of a `P×T` block, returned frequency-major:
    /// element `[j][p]`.
    pub fn transform_block(&self, block: &[f64], n_channels: usize, taper: Option<&[f64]>) -> Vec<Vec<Complex64>> {
        let per_channel: Vec<Vec<Complex64>> = block
            .chunks_exact(self.n_samples)
            .take(n_channels)
            .map(|x| self.transform(x, taper))
            .collect();
        (0..self.phase.len())
            .map(|j| per_channel.iter().map(|d| d[j]).collect())
            .collect()
    }
}

/// Accumulates `scale · d d*` into `acc` (column-major `P×P`).
pub(crate) fn add_outer(acc: &mut CMatrix, d: &[Complex64], scale: f64) {
    let p = d.len();
    let s = acc.as_mut_slice();
    for q in 0..p {
        let cq = d[q].conj() * scale;
        for r in 0..p {
            s[q * p + r] += d[r] * cq;
        }
    }
}

/// Raw periodogram `I(ω_j) = T⁻¹ d(ω_j) d(ω_j)*` of one `P×T` trial block.
pub fn raw_periodogram(trial: &[f64], n_channels: usize, grid: &FrequencyGrid) -> Result<Vec<CMatrix>> {
    raw_periodogram_with(&HalfDft::new(grid.n_samples()), trial, n_channels, grid)
}

fn raw_periodogram_with(
    dft: &HalfDft,
    trial: &[f64],
    n_channels: usize,
    grid: &FrequencyGrid,
) -> Result<Vec<CMatrix>> {
    if n_channels == 0 || trial.len() != n_channels * grid.n_samples() {
        return Err(Error::Dimension(format!(
            "trial block of {} values does not match P={n_channels}, T={}",
            trial.len(),
            grid.n_samples()
        )));
    }
    let inv_t = 1.0 / grid.n_samples() as f64;
    Ok(dft
        .transform_block(trial, n_channels, None)
        .iter()
        .map(|d| {
            let mut m = CMatrix::zeros(n_channels, n_channels);
            add_outer(&mut m, d, inv_t);
            m
        })
        .collect())
}

/// Per-trial periodograms together with their trial average `f̂⁰`.
#[derive(Debug, Clone)]
pub struct PeriodogramSet {
    grid: FrequencyGrid,
    per_trial: Vec<Vec<CMatrix>>,
    mean: SpectralEstimate,
}

impl PeriodogramSet {
    pub fn compute(trials: &MultiTrialSeries) -> Result<Self> {
        let grid = trials.grid();
        let dft = HalfDft::new(grid.n_samples());
        let p = trials.n_channels();
        let per_trial = parallel::try_map_indexed(trials.n_trials(), |n| {
            raw_periodogram_with(&dft, trials.trial(n), p, &grid)
        })?;
        let mean = average(&grid, &per_trial.iter().collect::<Vec<_>>(), EstimatorTag::RawMean)?;
        Ok(Self {
            grid,
            per_trial,
            mean,
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn n_trials(&self) -> usize {
        self.per_trial.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    pub fn trial(&self, n: usize) -> &[CMatrix] {
        &self.per_trial[n]
    }

    pub fn mean(&self) -> &SpectralEstimate {
        &self.mean
    }
}

fn average(grid: &FrequencyGrid, sets: &[&Vec<CMatrix>], tag: EstimatorTag) -> Result<SpectralEstimate> {
    let n = sets.len();
    if n == 0 {
        return Err(Error::InsufficientTrials {
            required: 1,
            got: 0,
        });
    }
    let scale = Complex64::from(1.0 / n as f64);
    let matrices = (0..grid.len())
        .map(|j| {
            let mut acc = sets[0][j].clone();
            for s in &sets[1..] {
                acc += &s[j];
            }
            acc * scale
        })
        .collect();
    SpectralEstimate::new(grid.clone(), matrices, tag)
}

/// Trial-averaged raw periodogram `f̂⁰(ω) = N⁻¹ Σ_n I_n(ω)`.
pub fn mean_periodogram(trials: &MultiTrialSeries) -> Result<SpectralEstimate> {
    Ok(PeriodogramSet::compute(trials)?.mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{hermitian_eigenvalues, validate_spectral, Tolerance};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// Direct O(T) evaluation of the DFT at an arbitrary index.
    fn direct_dft(x: &[f64], k: isize) -> Complex64 {
        let t_len = x.len() as f64;
        let s: Complex64 = x
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let t = (i + 1) as f64;
                Complex64::from_polar(*v, -2.0 * PI * k as f64 * t / t_len)
            })
            .sum();
        s / (2.0 * PI).sqrt()
    }

    #[test]
    fn zero_trial_gives_zero_matrices() {
        let grid = FrequencyGrid::new(16).unwrap();
        let i = raw_periodogram(&vec![0.0; 32], 2, &grid).unwrap();
        assert!(i.iter().all(|m| m.iter().all(|z| z.norm() == 0.0)));
    }

    #[test]
    fn fourier_cosine() {
        let t = 64;
        let k = 5;
        let grid = FrequencyGrid::new(t).unwrap();
        let x: Vec<f64> = (1..=t)
            .map(|s| (2.0 * PI * k as f64 * s as f64 / t as f64).cos())
            .collect();
        let i = raw_periodogram(&x, 1, &grid).unwrap();
        assert_abs_diff_eq!(i[k][(0, 0)].re, t as f64 / (8.0 * PI), epsilon = 1e-10);
        for (j, m) in i.iter().enumerate().filter(|(j, _)| *j != k) {
            assert!(m[(0, 0)].re.abs() < 1e-10, "leak at {j}");
        }
    }

    #[test]
    fn white_noise_level() {
        let t = 256;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials: Vec<Vec<f64>> = (0..200).map(|_| noise(&mut rng, t)).collect();
        let s = MultiTrialSeries::from_trials(trials, 1, 1.0).unwrap();
        let mean = mean_periodogram(&s).unwrap();
        let interior = &mean.matrices()[1..t / 2];
        let avg = interior.iter().map(|m| m[(0, 0)].re).sum::<f64>() / interior.len() as f64;
        assert!((avg - 1.0 / (2.0 * PI)).abs() < 0.02, "avg {avg}");
    }

    #[test]
    fn matches_direct_dft_and_mirror() {
        let t = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let block = noise(&mut rng, 2 * t);
        let grid = FrequencyGrid::new(t).unwrap();
        let i = raw_periodogram(&block, 2, &grid).unwrap();
        for j in [0usize, 1, 7, 15] {
            let d0 = direct_dft(&block[..t], j as isize);
            let d1 = direct_dft(&block[t..], j as isize);
            let expect01 = d0 * d1.conj() / t as f64;
            assert_abs_diff_eq!((i[j][(0, 1)] - expect01).norm(), 0.0, epsilon = 1e-10);
            // value at 2π − ω from a direct transform is the conjugate
            let m0 = direct_dft(&block[..t], (t - j) as isize);
            let m1 = direct_dft(&block[t..], (t - j) as isize);
            let mirror = m0 * m1.conj() / t as f64;
            assert_abs_diff_eq!((mirror - i[j][(0, 1)].conj()).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn parseval_and_rank_one() {
        for t in [32usize, 33] {
            let mut rng = ChaCha8Rng::seed_from_u64(t as u64);
            let block = noise(&mut rng, 3 * t);
            let grid = FrequencyGrid::new(t).unwrap();
            let i = raw_periodogram(&block, 3, &grid).unwrap();
            let est = SpectralEstimate::new(grid, i.clone(), EstimatorTag::RawMean).unwrap();
            let total = est.full_circle_sum();
            for p in 0..3 {
                let ch = &block[p * t..(p + 1) * t];
                let var = ch.iter().map(|v| v * v).sum::<f64>() / t as f64;
                assert!((total[(p, p)].re - var).abs() < 1e-8 * var);
            }
            for m in &i {
                assert!(validate_spectral(m, Tolerance { hermitian: 1e-14, psd: 1e-10 }).passed());
                let ev = hermitian_eigenvalues(m);
                assert!(ev[1].abs() <= 1e-8 * ev[2].abs().max(1e-300));
            }
        }
    }

    #[test]
    fn mean_periodogram_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = noise(&mut rng, 16);
        let grid = FrequencyGrid::new(16).unwrap();
        let single = raw_periodogram(&x, 1, &grid).unwrap();
        let one = mean_periodogram(&MultiTrialSeries::from_trials(vec![x.clone()], 1, 1.0).unwrap()).unwrap();
        assert_eq!(one.matrices(), &single[..]);
        let same = mean_periodogram(
            &MultiTrialSeries::from_trials(vec![x.clone(), x.clone(), x.clone()], 1, 1.0).unwrap(),
        )
        .unwrap();
        for (a, b) in same.matrices().iter().zip(&single) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
        }
        // constants scaled so that I(0) = 2 and 4
        let t = 8usize;
        let a = (2.0 * 2.0 * PI / t as f64).sqrt();
        let b = (4.0 * 2.0 * PI / t as f64).sqrt();
        let s = MultiTrialSeries::from_trials(vec![vec![a; t], vec![b; t]], 1, 1.0).unwrap();
        let m = mean_periodogram(&s).unwrap();
        assert_abs_diff_eq!(m.at(0)[(0, 0)].re, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let grid = FrequencyGrid::new(8).unwrap();
        assert!(matches!(
            raw_periodogram(&[0.0; 10], 1, &grid),
            Err(Error::Dimension(_))
        ));
    }
}
