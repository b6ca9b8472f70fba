//! Multi-trial data model and the preprocessing applied before estimation.

use crate::error::{Error, Result};
use crate::parallel;
use crate::spectral::FrequencyGrid;

/// `N` independent trials of a `P`-channel, `T`-sample real series.
///
/// Values are stored flat in `[trial][channel][time]` row-major order, the
/// same layout as the on-disk trial format.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTrialSeries {
    n_trials: usize,
    n_channels: usize,
    n_samples: usize,
    values: Vec<f64>,
    sampling_rate: f64,
    channel_labels: Vec<String>,
}

impl MultiTrialSeries {
    pub fn from_flat(
        n_trials: usize,
        n_channels: usize,
        n_samples: usize,
        values: Vec<f64>,
        sampling_rate: f64,
        channel_labels: Vec<String>,
    ) -> Result<Self> {
        if n_trials < 1 || n_channels < 1 || n_samples < 2 {
            return Err(Error::InvalidParameter(format!(
                "need N >= 1, P >= 1, T >= 2; got N={n_trials} P={n_channels} T={n_samples}"
            )));
        }
        if values.len() != n_trials * n_channels * n_samples {
            return Err(Error::Dimension(format!(
                "expected {} values for N={n_trials} P={n_channels} T={n_samples}, got {}",
                n_trials * n_channels * n_samples,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at flat index {i}")));
        }
        if !(sampling_rate.is_finite() && sampling_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sampling rate must be positive, got {sampling_rate}"
            )));
        }
        if channel_labels.len() != n_channels {
            return Err(Error::Dimension(format!(
                "{} channel labels for {n_channels} channels",
                channel_labels.len()
            )));
        }
        Ok(Self {
            n_trials,
            n_channels,
            n_samples,
            values,
            sampling_rate,
            channel_labels,
        })
    }

    /// Builds a series from per-trial `P×T` blocks (channel-major), labelling
    /// channels `ch1..chP`.
    pub fn from_trials(trials: Vec<Vec<f64>>, n_channels: usize, sampling_rate: f64) -> Result<Self> {
        let n_trials = trials.len();
        if n_trials == 0 || n_channels == 0 {
            return Err(Error::InvalidParameter("no trials or channels".into()));
        }
        let block = trials[0].len();
        if !block.is_multiple_of(n_channels) || trials.iter().any(|t| t.len() != block) {
            return Err(Error::Dimension("ragged trials".into()));
        }
        let n_samples = block / n_channels;
        let labels = (1..=n_channels).map(|p| format!("ch{p}")).collect();
        Self::from_flat(
            n_trials,
            n_channels,
            n_samples,
            trials.concat(),
            sampling_rate,
            labels,
        )
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn sampling_rate(&self) -> f64 {
        self.sampling_rate
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The `P×T` block of trial `n`, channel-major.
    pub fn trial(&self, n: usize) -> &[f64] {
        let block = self.n_channels * self.n_samples;
        &self.values[n * block..(n + 1) * block]
    }

    pub fn channel(&self, n: usize, p: usize) -> &[f64] {
        let start = (n * self.n_channels + p) * self.n_samples;
        &self.values[start..start + self.n_samples]
    }

    pub fn grid(&self) -> FrequencyGrid {
        FrequencyGrid::new(self.n_samples)
            .and_then(|g| g.with_sampling_rate(self.sampling_rate))
            .expect("validated at construction")
    }

    /// A new series holding the listed trials in the listed order.
    pub fn select_trials(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InsufficientTrials {
                required: 1,
                got: 0,
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_trials) {
            return Err(Error::Dimension(format!(
                "trial index {bad} out of range for N={}",
                self.n_trials
            )));
        }
        let mut values = Vec::with_capacity(indices.len() * self.n_channels * self.n_samples);
        for &i in indices {
            values.extend_from_slice(self.trial(i));
        }
        Ok(Self {
            n_trials: indices.len(),
            values,
            ..self.clone_meta()
        })
    }

    /// All trials except `n`.
    pub fn leave_out(&self, n: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..self.n_trials).filter(|&i| i != n).collect();
        self.select_trials(&keep)
    }

    fn clone_meta(&self) -> Self {
        Self {
            n_trials: self.n_trials,
            n_channels: self.n_channels,
            n_samples: self.n_samples,
            values: Vec::new(),
            sampling_rate: self.sampling_rate,
            channel_labels: self.channel_labels.clone(),
        }
    }

    fn map_channels<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(usize, usize, &[f64]) -> Result<Vec<f64>> + Sync + Send,
    {
        let p = self.n_channels;
        let blocks = parallel::try_map_indexed(self.n_trials, |n| {
            let mut out = Vec::with_capacity(p * self.n_samples);
            for c in 0..p {
                out.extend(f(n, c, self.channel(n, c))?);
            }
            Ok(out)
        })?;
        Ok(Self {
            values: blocks.concat(),
            ..self.clone_meta()
        })
    }
}

/// Polynomial trend removed by [`detrend`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrendOrder {
    Linear,
    Quadratic,
}

impl TrendOrder {
    pub fn degree(self) -> usize {
        match self {
            TrendOrder::Linear => 1,
            TrendOrder::Quadratic => 2,
        }
    }
}

/// Orthonormal basis for polynomials of degree `<= degree` on `t = 1..T`.
fn polynomial_basis(n_samples: usize, degree: usize) -> Vec<Vec<f64>> {
    let mid = (n_samples as f64 + 1.0) / 2.0;
    let scale = (n_samples as f64 / 2.0).max(1.0);
    let u: Vec<f64> = (1..=n_samples).map(|t| (t as f64 - mid) / scale).collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(degree + 1);
    for d in 0..=degree {
        let mut v: Vec<f64> = u.iter().map(|x| x.powi(d as i32)).collect();
        // two Gram-Schmidt passes
        for _ in 0..2 {
            for q in &basis {
                let proj: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    basis
}

fn remove_projection(x: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r = x.to_vec();
    for q in basis {
        let proj: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
        r.iter_mut().zip(q).for_each(|(a, b)| *a -= proj * b);
    }
    r
}

/// Subtracts the least-squares polynomial trend in `t` from every
/// (trial, channel) series.
pub fn detrend(series: &MultiTrialSeries, order: TrendOrder) -> Result<MultiTrialSeries> {
    let degree = order.degree();
    if series.n_samples() <= degree + 1 {
        return Err(Error::InsufficientData(format!(
            "detrending degree {degree} needs T > {}, got T={}",
            degree + 1,
            series.n_samples()
        )));
    }
    let basis = polynomial_basis(series.n_samples(), degree);
    series.map_channels(|_, _, x| Ok(remove_projection(x, &basis)))
}

/// Centers each (trial, channel) series and scales it to unit sample
/// variance (divisor `T − 1`).
pub fn standardize(series: &MultiTrialSeries) -> Result<MultiTrialSeries> {
    let t = series.n_samples() as f64;
    series.map_channels(|n, p, x| {
        let mean = x.iter().sum::<f64>() / t;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1.0);
        let max_abs = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !(var > 1e-24 * max_abs * max_abs) || var == 0.0 {
            return Err(Error::DegenerateChannel {
                trial: n,
                channel: p,
            });
        }
        let sd = var.sqrt();
        Ok(x.iter().map(|v| (v - mean) / sd).collect())
    })
}
