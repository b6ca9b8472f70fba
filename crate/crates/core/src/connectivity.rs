//! Coherence, partial coherence and the between-condition inference stack:
//! band averaging, Fisher Z, delete-one-trial jackknife, Welch t-tests and
//! Benjamini–Hochberg FDR control.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::parallel;
use crate::shrinkage::{full_pipeline, PipelineOptions};
use crate::spectral::{guarded_hermitian_inverse, CMatrix, FrequencyGrid, SpectralEstimate};
use crate::timeseries::MultiTrialSeries;

/// Largest eigenvalue condition number accepted when inverting a spectral
/// matrix for partial coherence.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectivityKind {
    Coherence,
    PartialCoherence,
}

/// Symmetric `P×P` connectivity matrices, one per grid frequency. Diagonals
/// are fixed at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivitySpectrum {
    pub kind: ConnectivityKind,
    pub grid: FrequencyGrid,
    pub matrices: Vec<DMatrix<f64>>,
}

/// Squared coherence `|f_pq|² / (f_pp f_qq)` at every frequency.
pub fn coherence(f: &SpectralEstimate) -> Result<ConnectivitySpectrum> {
    let matrices = f
        .matrices()
        .iter()
        .enumerate()
        .map(|(j, m)| coherence_matrix(m, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConnectivitySpectrum {
        kind: ConnectivityKind::Coherence,
        grid: f.grid().clone(),
        matrices,
    })
}

fn coherence_matrix(m: &CMatrix, freq: usize) -> Result<DMatrix<f64>> {
    let p = m.nrows();
    if let Some(channel) = (0..p).find(|&i| !(m[(i, i)].re > 0.0)) {
        return Err(Error::ZeroAutospectrum { channel, freq });
    }
    Ok(DMatrix::from_fn(p, p, |a, b| {
        if a == b {
            1.0
        } else {
            let (lo, hi) = (a.min(b), a.max(b));
            m[(lo, hi)].norm_sqr() / (m[(lo, lo)].re * m[(hi, hi)].re)
        }
    }))
}

/// Partial coherence of a single spectral matrix: with `g = f⁻¹` and
/// `h = diag(g_pp^{-1/2})`, `ρ_pq = |(−h g h)_pq|²`.
pub fn partial_coherence_matrix(m: &CMatrix, omega: f64) -> Result<DMatrix<f64>> {
    let g = guarded_hermitian_inverse(m, MAX_CONDITION)
        .map_err(|condition| Error::IllConditioned { omega, condition })?;
    let p = g.nrows();
    let h: Vec<f64> = (0..p).map(|i| g[(i, i)].re.sqrt().recip()).collect();
    Ok(DMatrix::from_fn(p, p, |a, b| {
        if a == b {
            1.0
        } else {
            let (lo, hi) = (a.min(b), a.max(b));
            (g[(lo, hi)] * h[lo] * h[hi]).norm_sqr()
        }
    }))
}

pub fn partial_coherence(f: &SpectralEstimate) -> Result<ConnectivitySpectrum> {
    let grid = f.grid();
    let matrices = f
        .matrices()
        .iter()
        .enumerate()
        .map(|(j, m)| partial_coherence_matrix(m, grid.omega(j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConnectivitySpectrum {
        kind: ConnectivityKind::PartialCoherence,
        grid: grid.clone(),
        matrices,
    })
}

/// Named frequency band with inclusive endpoints in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub name: String,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl Band {
    pub fn new(name: impl Into<String>, lo_hz: f64, hi_hz: f64) -> Self {
        Self {
            name: name.into(),
            lo_hz,
            hi_hz,
        }
    }

    pub fn alpha() -> Self {
        Self::new("alpha", 8.0, 12.0)
    }

    pub fn beta() -> Self {
        Self::new("beta", 18.0, 30.0)
    }

    /// Grid indices whose frequency lies in `[lo, hi]`.
    pub fn indices(&self, grid: &FrequencyGrid) -> Result<Vec<usize>> {
        // tolerance absorbs rounding in j·fs/T
        let eps = 1e-9 * self.hi_hz.abs().max(1.0);
        let idx: Vec<usize> = (0..grid.len())
            .filter(|&j| {
                let hz = grid.hz(j);
                hz >= self.lo_hz - eps && hz <= self.hi_hz + eps
            })
            .collect();
        if idx.is_empty() {
            return Err(Error::EmptyBand {
                lo: self.lo_hz,
                hi: self.hi_hz,
            });
        }
        Ok(idx)
    }
}

/// Connectivity averaged over the grid frequencies of one band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandConnectivity {
    pub kind: ConnectivityKind,
    pub band: Band,
    pub n_frequencies: usize,
    pub matrix: DMatrix<f64>,
}

pub fn band_average(result: &ConnectivitySpectrum, band: &Band) -> Result<BandConnectivity> {
    let idx = band.indices(&result.grid)?;
    let mut acc = result.matrices[idx[0]].clone();
    for &j in &idx[1..] {
        acc += &result.matrices[j];
    }
    acc /= idx.len() as f64;
    Ok(BandConnectivity {
        kind: result.kind,
        band: band.clone(),
        n_frequencies: idx.len(),
        matrix: acc,
    })
}

/// `z = atanh(√ρ)` for a squared-correlation-scale quantity `ρ ∈ [0, 1)`.
pub fn fisher_z(rho: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("Fisher Z needs 0 <= rho < 1, got {rho}")));
    }
    Ok(rho.sqrt().atanh())
}

/// Jackknife summary of delete-one replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JackknifeStats {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

/// `z̄` and `SE = √((n−1)/n · Σ(z_i − z̄)²)` of the replicates.
pub fn jackknife(replicates: &[f64]) -> Result<JackknifeStats> {
    let n = replicates.len();
    if n < 2 {
        return Err(Error::InsufficientTrials { required: 2, got: n });
    }
    let nf = n as f64;
    let mean = replicates.iter().sum::<f64>() / nf;
    let ss: f64 = replicates.iter().map(|z| (z - mean) * (z - mean)).sum();
    Ok(JackknifeStats {
        mean,
        se: ((nf - 1.0) / nf * ss).sqrt(),
        n,
    })
}

/// Upper-triangle channel pairs `(p, q)`, `p < q`, in row order.
pub fn channel_pairs(p: usize) -> Vec<(usize, usize)> {
    (0..p)
        .flat_map(|a| (a + 1..p).map(move |b| (a, b)))
        .collect()
}

/// Jackknife statistics indexed `[band][pair]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JackknifeTable {
    pub bands: Vec<Band>,
    pub pairs: Vec<(usize, usize)>,
    pub stats: Vec<Vec<JackknifeStats>>,
}

/// Band-averaged, Fisher-Z-transformed partial coherence for every
/// delete-one-trial subsample. Returned as `[trial][band][pair]`.
pub fn jackknife_replicates(
    trials: &MultiTrialSeries,
    bands: &[Band],
    options: &PipelineOptions,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let n = trials.n_trials();
    if n < 2 {
        return Err(Error::InsufficientTrials { required: 2, got: n });
    }
    let pairs = channel_pairs(trials.n_channels());
    parallel::try_map_indexed(n, |left_out| {
        let subset = trials.leave_out(left_out)?;
        let fit = full_pipeline(&subset, options)?;
        let pc = partial_coherence(&fit.estimate)?;
        bands
            .iter()
            .map(|band| {
                let avg = band_average(&pc, band)?;
                pairs
                    .iter()
                    .map(|&(a, b)| fisher_z(avg.matrix[(a, b)]))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })
}

/// Jackknife mean and standard error of band partial coherence (Fisher Z
/// scale) for every channel pair, rerunning the shrinkage pipeline with one
/// trial left out at a time.
pub fn jackknife_band_stats(
    trials: &MultiTrialSeries,
    bands: &[Band],
    options: &PipelineOptions,
) -> Result<JackknifeTable> {
    let reps = jackknife_replicates(trials, bands, options)?;
    let pairs = channel_pairs(trials.n_channels());
    let stats = (0..bands.len())
        .map(|b| {
            (0..pairs.len())
                .map(|k| jackknife(&reps.iter().map(|r| r[b][k]).collect::<Vec<_>>()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(JackknifeTable {
        bands: bands.to_vec(),
        pairs,
        stats,
    })
}

/// Two-sample t-test on summary statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    /// Both standard errors are zero and the means differ.
    pub infinite: bool,
}

/// Welch test: `t = (m_A − m_B)/√(SE_A² + SE_B²)` with Welch–Satterthwaite
/// degrees of freedom and a two-sided p-value.
pub fn welch_t(a: JackknifeStats, b: JackknifeStats) -> Result<WelchTest> {
    if a.n < 2 || b.n < 2 {
        return Err(Error::InsufficientTrials {
            required: 2,
            got: a.n.min(b.n),
        });
    }
    if !(a.se >= 0.0 && b.se >= 0.0) {
        return Err(Error::Domain("standard errors must be nonnegative".into()));
    }
    let va = a.se * a.se;
    let vb = b.se * b.se;
    let diff = a.mean - b.mean;
    if va + vb == 0.0 {
        let df = (a.n + b.n - 2) as f64;
        return Ok(if diff == 0.0 {
            WelchTest { t: 0.0, df, p: 1.0, infinite: false }
        } else {
            WelchTest {
                t: diff.signum() * f64::INFINITY,
                df,
                p: 0.0,
                infinite: true,
            }
        });
    }
    let t = diff / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (a.n - 1) as f64 + vb * vb / (b.n - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Domain(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchTest { t, df, p, infinite: false })
}

/// Benjamini–Hochberg step-up: rejects the `k` smallest p-values, where `k`
/// is the largest rank with `p_(k) ≤ kq/m`.
pub fn bh_fdr(pvalues: &[f64], q: f64) -> Result<Vec<bool>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("FDR level must be in (0, 1), got {q}")));
    }
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let k = (1..=m)
        .rev()
        .find(|&k| pvalues[order[k - 1]] <= k as f64 * q / m as f64)
        .unwrap_or(0);
    let mut reject = vec![false; m];
    for &i in &order[..k] {
        reject[i] = true;
    }
    Ok(reject)
}

/// One row of a between-condition comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct BandTestResult {
    pub band: String,
    pub pair: (usize, usize),
    pub left: JackknifeStats,
    pub right: JackknifeStats,
    pub test: WelchTest,
    pub rejected: bool,
}

/// Compares two jackknife tables pair by pair and applies BH-FDR jointly
/// across all bands and pairs.
pub fn compare_conditions(left: &JackknifeTable, right: &JackknifeTable, q: f64) -> Result<Vec<BandTestResult>> {
    if left.pairs != right.pairs || left.bands != right.bands {
        return Err(Error::Dimension(
            "conditions disagree on channels or bands".into(),
        ));
    }
    let mut rows = Vec::new();
    for (b, band) in left.bands.iter().enumerate() {
        for (k, &pair) in left.pairs.iter().enumerate() {
            let (l, r) = (left.stats[b][k], right.stats[b][k]);
            rows.push(BandTestResult {
                band: band.name.clone(),
                pair,
                left: l,
                right: r,
                test: welch_t(l, r)?,
                rejected: false,
            });
        }
    }
    let p: Vec<f64> = rows.iter().map(|r| r.test.p).collect();
    for (row, rej) in rows.iter_mut().zip(bh_fdr(&p, q)?) {
        row.rejected = rej;
    }
    Ok(rows)
}
