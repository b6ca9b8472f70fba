//! Hann-kernel smoothing of periodograms across frequency and per-trial span
//! selection by plug-in unbiased risk estimation (PURE) against a
//! leave-one-out pilot.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::parallel;
use crate::periodogram::PeriodogramSet;
use crate::spectral::{CMatrix, EstimatorTag, FrequencyGrid, SpectralEstimate};
use crate::timeseries::MultiTrialSeries;

/// Kernel family used for frequency smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    #[default]
    Hann,
}

/// How the per-trial smoothing span is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum SpanSelection {
    /// Same span for every trial.
    Fixed(usize),
    /// PURE selection over the given candidate spans.
    Pure(Vec<usize>),
}

/// Kernel, candidate spans and the span chosen for each trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingConfig {
    pub kernel: Kernel,
    pub span_grid: Vec<usize>,
    pub selected_spans: Vec<usize>,
}

/// Odd spans `3, 5, .., min(T/4 rounded down to odd, 63)`; `[1]` when `T`
/// is too short for any smoothing.
pub fn default_span_grid(n_samples: usize) -> Vec<usize> {
    let quarter = n_samples / 4;
    let top = if quarter % 2 == 1 { quarter } else { quarter.saturating_sub(1) };
    let top = top.min(63);
    let grid: Vec<usize> = (3..=top).step_by(2).filter(|&h| h < n_samples).collect();
    if grid.is_empty() {
        vec![1]
    } else {
        grid
    }
}

/// Discrete Hann weights `w_m ∝ cos²(πm/(span+1))`, `|m| ≤ (span−1)/2`,
/// normalized to sum to one.
pub fn hann_weights(span: usize) -> Result<Vec<f64>> {
    if span == 0 || span.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "smoothing span must be odd and >= 1, got {span}"
        )));
    }
    let half = (span as isize - 1) / 2;
    let raw: Vec<f64> = (-half..=half)
        .map(|m| (PI * m as f64 / (span as f64 + 1.0)).cos().powi(2))
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

fn check_span(span: usize, grid: &FrequencyGrid) -> Result<()> {
    if span == 0 || span.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "smoothing span must be odd and >= 1, got {span}"
        )));
    }
    if span >= grid.n_samples() {
        return Err(Error::InvalidParameter(format!(
            "smoothing span {span} too large for T = {}",
            grid.n_samples()
        )));
    }
    Ok(())
}

/// Upper triangles (column-major, diagonal included) of the half-grid
/// matrices, extended by `pad` folded frequencies on each side. Entry `i`
/// holds Fourier index `i − pad`.
struct PackedExtension {
    pad: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl PackedExtension {
    fn new(grid: &FrequencyGrid, matrices: &[CMatrix], pad: usize) -> Self {
        let p = matrices[0].nrows();
        let width = p * (p + 1) / 2;
        let total = grid.len() + 2 * pad;
        let mut data = Vec::with_capacity(total * width);
        for i in 0..total {
            let (idx, conj) = grid.fold_index(i as isize - pad as isize);
            let m = &matrices[idx];
            for q in 0..p {
                for r in 0..=q {
                    let z = m[(r, q)];
                    data.push(if conj { z.conj() } else { z });
                }
            }
        }
        Self { pad, width, data }
    }

    fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

fn pack(m: &CMatrix) -> Vec<Complex64> {
    let p = m.nrows();
    let mut out = Vec::with_capacity(p * (p + 1) / 2);
    for q in 0..p {
        for r in 0..=q {
            out.push(m[(r, q)]);
        }
    }
    out
}

fn unpack(packed: &[Complex64], p: usize) -> CMatrix {
    let mut m = CMatrix::zeros(p, p);
    let mut k = 0;
    for q in 0..p {
        for r in 0..=q {
            let z = packed[k];
            if r == q {
                m[(r, q)] = Complex64::new(z.re, 0.0);
            } else {
                m[(r, q)] = z;
                m[(q, r)] = z.conj();
            }
            k += 1;
        }
    }
    m
}

/// Hilbert–Schmidt multiplicities for packed entries (1 diagonal, 2 off).
fn packed_multiplicity(p: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(p * (p + 1) / 2);
    for q in 0..p {
        for r in 0..=q {
            out.push(if r == q { 1.0 } else { 2.0 });
        }
    }
    out
}

fn smooth_packed(ext: &PackedExtension, n_freq: usize, weights: &[f64], out: &mut Vec<Complex64>) {
    let half = (weights.len() - 1) / 2;
    let width = ext.width;
    out.clear();
    out.resize(n_freq * width, Complex64::new(0.0, 0.0));
    for j in 0..n_freq {
        let dst = &mut out[j * width..(j + 1) * width];
        let base = j + ext.pad - half;
        for (m, &w) in weights.iter().enumerate() {
            let src = ext.row(base + m);
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * w;
            }
        }
    }
}

/// Circular convolution of the per-frequency matrices with Hann weights of
/// the given span. Frequencies outside `[0, π]` are obtained from conjugate
/// symmetry, so the result is exact for periodograms.
pub fn smooth_periodogram(grid: &FrequencyGrid, matrices: &[CMatrix], span: usize) -> Result<Vec<CMatrix>> {
    check_span(span, grid)?;
    if matrices.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{} matrices for {} grid frequencies",
            matrices.len(),
            grid.len()
        )));
    }
    let p = matrices[0].nrows();
    let weights = hann_weights(span)?;
    let ext = PackedExtension::new(grid, matrices, (span - 1) / 2);
    let mut out = Vec::new();
    smooth_packed(&ext, grid.len(), &weights, &mut out);
    Ok(out.chunks_exact(ext.width).map(|c| unpack(c, p)).collect())
}

/// Leave-one-out pilot `f̂_(−n)(ω) = (N−1)⁻¹ Σ_{j≠n} I_j(ω)`.
pub fn loo_pilot(periodograms: &PeriodogramSet, n: usize) -> Result<Vec<CMatrix>> {
    let count = periodograms.n_trials();
    if count < 2 {
        return Err(Error::InsufficientTrials {
            required: 2,
            got: count,
        });
    }
    if n >= count {
        return Err(Error::Dimension(format!("trial {n} out of range for N={count}")));
    }
    let scale = Complex64::from(1.0 / (count - 1) as f64);
    let others: Vec<usize> = (0..count).filter(|&i| i != n).collect();
    Ok((0..periodograms.grid().len())
        .map(|j| {
            let mut acc = periodograms.trial(others[0])[j].clone();
            for &i in &others[1..] {
                acc += &periodograms.trial(i)[j];
            }
            acc * scale
        })
        .collect())
}

/// PURE risk `R̂_n(h) = (2π/T) Σ_j ‖f̂_(−n)(ω_j) − f̃_{n,h}(ω_j)‖²` for every
/// span in `span_grid`, in grid order.
pub fn pure_risks(periodograms: &PeriodogramSet, n: usize, span_grid: &[usize]) -> Result<Vec<f64>> {
    if span_grid.is_empty() {
        return Err(Error::InvalidParameter("empty span grid".into()));
    }
    let grid = periodograms.grid();
    for &h in span_grid {
        check_span(h, grid)?;
    }
    let pilot = loo_pilot(periodograms, n)?;
    let p = periodograms.dim();
    let pilot_packed: Vec<Complex64> = pilot.iter().flat_map(pack).collect();
    let mult = packed_multiplicity(p);
    let max_span = *span_grid.iter().max().expect("nonempty");
    let ext = PackedExtension::new(grid, periodograms.trial(n), (max_span - 1) / 2);
    let width = ext.width;
    let dw = 2.0 * PI / grid.n_samples() as f64 / p as f64;
    let mut smoothed = Vec::new();
    span_grid
        .iter()
        .map(|&h| {
            let weights = hann_weights(h)?;
            smooth_packed(&ext, grid.len(), &weights, &mut smoothed);
            let risk: f64 = smoothed
                .chunks_exact(width)
                .zip(pilot_packed.chunks_exact(width))
                .map(|(s, f)| {
                    s.iter()
                        .zip(f)
                        .zip(&mult)
                        .map(|((a, b), m)| m * (a - b).norm_sqr())
                        .sum::<f64>()
                })
                .sum();
            Ok(risk * dw)
        })
        .collect()
}

/// Index of the smallest value; ties go to the earliest index.
pub(crate) fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Span in `span_grid` minimizing the PURE risk of trial `n`. Ties go to
/// the smaller span.
pub fn pure_select_span(periodograms: &PeriodogramSet, n: usize, span_grid: &[usize]) -> Result<usize> {
    let mut order: Vec<usize> = span_grid.to_vec();
    order.sort_unstable();
    order.dedup();
    let risks = pure_risks(periodograms, n, &order)?;
    Ok(order[argmin_first(&risks)])
}

/// Smoothed-periodogram estimator from precomputed periodograms.
pub fn smoothed_from_periodograms(
    periodograms: &PeriodogramSet,
    selection: &SpanSelection,
) -> Result<(SpectralEstimate, SmoothingConfig)> {
    let grid = periodograms.grid();
    let count = periodograms.n_trials();
    let (span_grid, spans) = match selection {
        SpanSelection::Fixed(h) => {
            check_span(*h, grid)?;
            (vec![*h], vec![*h; count])
        }
        SpanSelection::Pure(candidates) => {
            if count < 2 {
                return Err(Error::InsufficientTrials {
                    required: 2,
                    got: count,
                });
            }
            let spans =
                parallel::try_map_indexed(count, |n| pure_select_span(periodograms, n, candidates))?;
            (candidates.clone(), spans)
        }
    };
    let p = periodograms.dim();
    let width = p * (p + 1) / 2;
    let per_trial: Vec<Vec<Complex64>> = parallel::try_map_indexed(count, |n| {
        let weights = hann_weights(spans[n])?;
        let ext = PackedExtension::new(grid, periodograms.trial(n), (spans[n] - 1) / 2);
        let mut out = Vec::new();
        smooth_packed(&ext, grid.len(), &weights, &mut out);
        Ok::<_, Error>(out)
    })?;
    let mut total = vec![Complex64::new(0.0, 0.0); grid.len() * width];
    for s in &per_trial {
        total.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    let inv = 1.0 / count as f64;
    let matrices = total
        .chunks_exact(width)
        .map(|c| unpack(c, p) * Complex64::from(inv))
        .collect();
    let estimate = SpectralEstimate::new(grid.clone(), matrices, EstimatorTag::Smoothed)?;
    Ok((
        estimate,
        SmoothingConfig {
            kernel: Kernel::Hann,
            span_grid,
            selected_spans: spans,
        },
    ))
}

/// Each trial's periodogram smoothed with its own span, then averaged over
/// trials: `f̃(ω) = N⁻¹ Σ_n f̃_n(ω)`.
pub fn smoothed_estimator(
    trials: &MultiTrialSeries,
    selection: &SpanSelection,
) -> Result<(SpectralEstimate, SmoothingConfig)> {
    smoothed_from_periodograms(&PeriodogramSet::compute(trials)?, selection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{validate_spectral, Tolerance};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn scalar_series(values: &[f64]) -> Vec<CMatrix> {
        values
            .iter()
            .map(|&v| CMatrix::from_element(1, 1, Complex64::new(v, 0.0)))
            .collect()
    }

    fn white(seed: u64, n: usize, p: usize, t: usize) -> MultiTrialSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trials = (0..n)
            .map(|_| (0..p * t).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        MultiTrialSeries::from_trials(trials, p, 1.0).unwrap()
    }

    #[test]
    fn hann_examples() {
        assert_eq!(hann_weights(1).unwrap(), vec![1.0]);
        let w = hann_weights(3).unwrap();
        for (a, b) in w.iter().zip([0.25, 0.5, 0.25]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        for span in [5usize, 7, 21, 63] {
            let w = hann_weights(span).unwrap();
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(w.iter().all(|&x| x > 0.0));
            for m in 0..span {
                assert_eq!(w[m], w[span - 1 - m]);
            }
        }
        assert!(hann_weights(0).is_err());
        assert!(hann_weights(4).is_err());
    }

    #[test]
    fn smoothing_examples() {
        let grid = FrequencyGrid::new(16).unwrap();
        let vals: Vec<f64> = (0..9).map(|j| (j * j) as f64).collect();
        let m = scalar_series(&vals);
        assert_eq!(smooth_periodogram(&grid, &m, 1).unwrap(), m);

        let flat = scalar_series(&[2.5; 9]);
        for s in smooth_periodogram(&grid, &flat, 7).unwrap() {
            assert_abs_diff_eq!(s[(0, 0)].re, 2.5, epsilon = 1e-14);
        }

        let mut spike = vec![0.0; 9];
        spike[4] = 8.0;
        let out = smooth_periodogram(&grid, &scalar_series(&spike), 3).unwrap();
        let got: Vec<f64> = out.iter().map(|m| m[(0, 0)].re).collect();
        for (g, e) in got[2..7].iter().zip([0.0, 2.0, 4.0, 2.0, 0.0]) {
            assert_abs_diff_eq!(*g, e, epsilon = 1e-14);
        }

        assert!(smooth_periodogram(&grid, &m, 17).is_err());
        assert!(smooth_periodogram(&grid, &m, 4).is_err());
    }

    #[test]
    fn smoothing_conserves_mass_and_psd() {
        let s = white(9, 1, 3, 40);
        let set = PeriodogramSet::compute(&s).unwrap();
        let grid = set.grid().clone();
        let before = SpectralEstimate::new(grid.clone(), set.trial(0).to_vec(), EstimatorTag::RawMean)
            .unwrap()
            .full_circle_sum();
        for span in [3usize, 9, 25] {
            let sm = smooth_periodogram(&grid, set.trial(0), span).unwrap();
            for m in &sm {
                assert!(validate_spectral(m, Tolerance::default()).passed());
            }
            let after = SpectralEstimate::new(grid.clone(), sm, EstimatorTag::Smoothed)
                .unwrap()
                .full_circle_sum();
            assert!((&after - &before).iter().all(|z| z.norm() < 1e-8 * before.norm()));
        }
    }

    #[test]
    fn loo_pilot_examples() {
        let grid_t = 8;
        // constant series c gives I(0) = c^2 T / (2π)
        let level = |i: f64| (i * 2.0 * PI / grid_t as f64).sqrt();
        let s = MultiTrialSeries::from_trials(
            vec![vec![level(3.0); grid_t], vec![level(6.0); grid_t], vec![level(9.0); grid_t]],
            1,
            1.0,
        )
        .unwrap();
        let set = PeriodogramSet::compute(&s).unwrap();
        assert_abs_diff_eq!(loo_pilot(&set, 1).unwrap()[0][(0, 0)].re, 6.0, epsilon = 1e-12);

        let two = white(1, 2, 2, 16);
        let set2 = PeriodogramSet::compute(&two).unwrap();
        assert_eq!(loo_pilot(&set2, 0).unwrap(), set2.trial(1).to_vec());

        let one = white(1, 1, 1, 16);
        assert!(matches!(
            loo_pilot(&PeriodogramSet::compute(&one).unwrap(), 0),
            Err(Error::InsufficientTrials { .. })
        ));

        let x: Vec<f64> = white(4, 1, 1, 16).values().to_vec();
        let same = MultiTrialSeries::from_trials(vec![x.clone(), x.clone(), x], 1, 1.0).unwrap();
        let set3 = PeriodogramSet::compute(&same).unwrap();
        for (a, b) in loo_pilot(&set3, 2).unwrap().iter().zip(set3.trial(0)) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn pure_is_exhaustive_argmin() {
        let s = white(21, 6, 2, 64);
        let set = PeriodogramSet::compute(&s).unwrap();
        let grid = default_span_grid(64);
        for n in 0..6 {
            let chosen = pure_select_span(&set, n, &grid).unwrap();
            let risks = pure_risks(&set, n, &grid).unwrap();
            let best = risks.iter().copied().fold(f64::INFINITY, f64::min);
            let idx = grid.iter().position(|&h| h == chosen).unwrap();
            assert_eq!(risks[idx], best);
            assert!(grid[..idx].iter().zip(&risks).all(|(_, r)| *r > best));
        }
        assert_eq!(pure_select_span(&set, 0, &[5]).unwrap(), 5);
        assert!(pure_select_span(&set, 0, &[]).is_err());
    }

    #[test]
    fn pure_risk_matches_direct_formula() {
        let s = white(2, 4, 2, 32);
        let set = PeriodogramSet::compute(&s).unwrap();
        let grid = set.grid().clone();
        let pilot = loo_pilot(&set, 1).unwrap();
        for h in [1usize, 3, 7] {
            let sm = smooth_periodogram(&grid, set.trial(1), h).unwrap();
            let direct: f64 = sm
                .iter()
                .zip(&pilot)
                .map(|(a, b)| crate::spectral::hs_norm_sq(&(a - b)).unwrap())
                .sum::<f64>()
                * 2.0
                * PI
                / 32.0;
            let r = pure_risks(&set, 1, &[h]).unwrap()[0];
            assert_abs_diff_eq!(r, direct, epsilon = 1e-12 * direct);
        }
    }

    #[test]
    fn estimator_degenerate_cases() {
        let s = white(8, 3, 2, 32);
        let set = PeriodogramSet::compute(&s).unwrap();
        let (one, cfg) = smoothed_from_periodograms(&set, &SpanSelection::Fixed(1)).unwrap();
        assert_eq!(cfg.selected_spans, vec![1, 1, 1]);
        for (a, b) in one.matrices().iter().zip(set.mean().matrices()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-14);
        }

        let x = white(3, 1, 2, 32).values().to_vec();
        let same = MultiTrialSeries::from_trials(vec![x.clone(), x.clone()], 2, 1.0).unwrap();
        let (est, _) = smoothed_estimator(&same, &SpanSelection::Fixed(5)).unwrap();
        let single = smooth_periodogram(&same.grid(), PeriodogramSet::compute(&same).unwrap().trial(0), 5).unwrap();
        for (a, b) in est.matrices().iter().zip(&single) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-14);
        }

        let lone = white(3, 1, 1, 32);
        assert!(smoothed_estimator(&lone, &SpanSelection::Pure(vec![3, 5])).is_err());
        assert!(smoothed_estimator(&lone, &SpanSelection::Fixed(3)).is_ok());
    }

    #[test]
    fn variance_drops_with_span() {
        let spans = [1usize, 5, 25];
        let mut var = [0.0; 3];
        for seed in 0..10 {
            let s = white(100 + seed, 1, 1, 256);
            let set = PeriodogramSet::compute(&s).unwrap();
            for (k, &h) in spans.iter().enumerate() {
                let sm = smooth_periodogram(set.grid(), set.trial(0), h).unwrap();
                let vals: Vec<f64> = sm[1..128].iter().map(|m| m[(0, 0)].re).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                var[k] += vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            }
        }
        assert!(var[0] > var[1] && var[1] > var[2], "{var:?}");
    }

    #[test]
    fn default_grid_shape() {
        let g = default_span_grid(256);
        assert_eq!(g.first(), Some(&3));
        assert_eq!(g.last(), Some(&63));
        assert_eq!(default_span_grid(40), vec![3, 5, 7, 9]);
        assert_eq!(default_span_grid(8), vec![1]);
    }
}
