//! Hermitian spectral matrices, the normalized Hilbert–Schmidt norm and the
//! half-circle Fourier grid every estimator is evaluated on.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix used for every spectral quantity.
pub type CMatrix = DMatrix<Complex64>;

/// Fourier frequencies `ω_j = 2πj/T` for `j = 0..=⌊T/2⌋`.
///
/// Negative frequencies are never stored; they follow from conjugate
/// symmetry `f(−ω) = conj(f(ω))` of spectra of real-valued series.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    n_samples: usize,
    sampling_rate: Option<f64>,
}

impl FrequencyGrid {
    pub fn new(n_samples: usize) -> Result<Self> {
        if n_samples < 2 {
            return Err(Error::InvalidParameter(format!(
                "frequency grid needs T >= 2, got {n_samples}"
            )));
        }
        Ok(Self {
            n_samples,
            sampling_rate: None,
        })
    }

    pub fn with_sampling_rate(mut self, hz: f64) -> Result<Self> {
        if !(hz.is_finite() && hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sampling rate must be positive, got {hz}"
            )));
        }
        self.sampling_rate = Some(hz);
        Ok(self)
    }

    /// Samples per trial, `T`.
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn sampling_rate(&self) -> Option<f64> {
        self.sampling_rate
    }

    /// Number of stored frequencies, `⌊T/2⌋ + 1`.
    pub fn len(&self) -> usize {
        self.n_samples / 2 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Angular frequency of grid index `j`, radians per sample.
    pub fn omega(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_samples as f64
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.omega(j)).collect()
    }

    /// Frequency of grid index `j` in Hz. Falls back to cycles per sample
    /// when no sampling rate is attached.
    pub fn hz(&self, j: usize) -> f64 {
        let cycles = j as f64 / self.n_samples as f64;
        cycles * self.sampling_rate.unwrap_or(1.0)
    }

    /// Maps an arbitrary integer Fourier index (any sign, any magnitude) onto
    /// the stored half grid. The flag is true when the stored value must be
    /// conjugated.
    pub fn fold_index(&self, k: isize) -> (usize, bool) {
        let t = self.n_samples as isize;
        let r = k.rem_euclid(t) as usize;
        if r <= self.n_samples / 2 {
            (r, false)
        } else {
            (self.n_samples - r, true)
        }
    }
}

/// Which estimator produced a [`SpectralEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorTag {
    RawMean,
    Smoothed,
    Var,
    Multitaper,
    Shrinkage,
    Truth,
}

impl EstimatorTag {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorTag::RawMean => "raw_mean",
            EstimatorTag::Smoothed => "smoothed",
            EstimatorTag::Var => "var",
            EstimatorTag::Multitaper => "multitaper",
            EstimatorTag::Shrinkage => "shrinkage",
            EstimatorTag::Truth => "truth",
        }
    }
}

/// One `P×P` Hermitian matrix per grid frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    grid: FrequencyGrid,
    dim: usize,
    matrices: Vec<CMatrix>,
    tag: EstimatorTag,
}

impl SpectralEstimate {
    pub fn new(grid: FrequencyGrid, matrices: Vec<CMatrix>, tag: EstimatorTag) -> Result<Self> {
        if matrices.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} matrices for a grid of {} frequencies",
                matrices.len(),
                grid.len()
            )));
        }
        let dim = matrices[0].nrows();
        if dim == 0 {
            return Err(Error::Dimension("empty spectral matrix".into()));
        }
        if let Some(j) = matrices
            .iter()
            .position(|m| m.nrows() != dim || m.ncols() != dim)
        {
            return Err(Error::Dimension(format!(
                "matrix at frequency index {j} is not {dim}x{dim}"
            )));
        }
        Ok(Self {
            grid,
            dim,
            matrices,
            tag,
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tag(&self) -> EstimatorTag {
        self.tag
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn into_matrices(self) -> Vec<CMatrix> {
        self.matrices
    }

    pub fn at(&self, j: usize) -> &CMatrix {
        &self.matrices[j]
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn with_tag(mut self, tag: EstimatorTag) -> Self {
        self.tag = tag;
        self
    }

    /// Multiplies every matrix by a real scalar.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            dim: self.dim,
            matrices: self.matrices.iter().map(|m| m * Complex64::from(c)).collect(),
            tag: self.tag,
        }
    }

    /// Autospectrum of channel `p` across the grid.
    pub fn autospectrum(&self, p: usize) -> Vec<f64> {
        self.matrices.iter().map(|m| m[(p, p)].re).collect()
    }

    /// Value at Fourier index `j + offset`, folded back onto the half grid.
    pub fn folded(&self, j: usize, offset: isize) -> CMatrix {
        let (idx, conj) = self.grid.fold_index(j as isize + offset);
        if conj {
            self.matrices[idx].map(|z| z.conj())
        } else {
            self.matrices[idx].clone()
        }
    }

    /// Riemann sum `(2π/T) Σ f(ω_j)` over the full circle `j = 0..T−1`,
    /// reconstructed from the half grid. Approximates `∫ f = Σ(0)`.
    pub fn full_circle_sum(&self) -> CMatrix {
        let t = self.grid.n_samples();
        let mut acc = CMatrix::zeros(self.dim, self.dim);
        for k in 0..t {
            acc += self.folded(0, k as isize);
        }
        acc * Complex64::from(2.0 * PI / t as f64)
    }

    pub fn validate(&self, tol: Tolerance) -> Vec<ValidityReport> {
        self.matrices
            .iter()
            .map(|m| validate_spectral(m, tol))
            .collect()
    }

    pub(crate) fn check_compatible(&self, other: &SpectralEstimate) -> Result<()> {
        if self.grid.n_samples() != other.grid.n_samples() || self.dim != other.dim {
            return Err(Error::Dimension(format!(
                "estimates disagree: T={} P={} vs T={} P={}",
                self.grid.n_samples(),
                self.dim,
                other.grid.n_samples(),
                other.dim
            )));
        }
        Ok(())
    }
}

/// Normalized Hilbert–Schmidt norm `P⁻¹ tr(A A*)`.
pub fn hs_norm_sq(a: &CMatrix) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "hs_norm_sq needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::Dimension("hs_norm_sq of an empty matrix".into()));
    }
    Ok(a.iter().map(|z| z.norm_sqr()).sum::<f64>() / a.nrows() as f64)
}

/// `hs_norm_sq(a − b)` without allocating the difference.
pub(crate) fn hs_dist_sq(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    let s: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    s / a.nrows() as f64
}

/// Relative tolerances for [`validate_spectral`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    /// Hermitian check: `max|A − A*| ≤ hermitian · max|A|`.
    pub hermitian: f64,
    /// PSD check: `λ_min ≥ −psd · tr(A)`.
    pub psd: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            hermitian: 1e-10,
            psd: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityReport {
    pub hermitian_deviation: f64,
    pub min_eigenvalue: f64,
    pub hermitian_ok: bool,
    pub psd_ok: bool,
    pub diagonal_ok: bool,
}

impl ValidityReport {
    pub fn passed(&self) -> bool {
        self.hermitian_ok && self.psd_ok && self.diagonal_ok
    }
}

/// Reports Hermitian deviation and smallest eigenvalue of `a`. The
/// eigenvalues are those of the Hermitian part `(A + A*)/2`.
pub fn validate_spectral(a: &CMatrix, tol: Tolerance) -> ValidityReport {
    let n = a.nrows().min(a.ncols());
    let scale = a.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    let mut deviation = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            deviation = deviation.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    let hermitian_ok = a.is_square() && deviation <= tol.hermitian * scale;
    let min_eigenvalue = if a.is_square() && n > 0 {
        hermitian_eigenvalues(a)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    } else {
        f64::NAN
    };
    let trace: f64 = (0..n).map(|i| a[(i, i)].re).sum();
    let psd_ok = min_eigenvalue >= -tol.psd * trace.max(0.0);
    let diagonal_ok = (0..n).all(|i| {
        let d = a[(i, i)];
        d.re >= -tol.psd * trace.max(0.0) && d.im.abs() <= tol.hermitian * scale.max(f64::MIN_POSITIVE)
    });
    ValidityReport {
        hermitian_deviation: deviation,
        min_eigenvalue,
        hermitian_ok,
        psd_ok,
        diagonal_ok,
    }
}

/// `(A + A*)/2`.
pub fn symmetrize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * Complex64::from(0.5)
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Inverse of a Hermitian positive-definite matrix, refusing when the
/// eigenvalue condition number exceeds `max_condition`. On refusal the
/// condition number is returned as the error value.
pub(crate) fn guarded_hermitian_inverse(
    a: &CMatrix,
    max_condition: f64,
) -> std::result::Result<CMatrix, f64> {
    let h = symmetrize(a);
    let ev = h.clone().symmetric_eigenvalues();
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= max_condition) {
        return Err(condition);
    }
    let inv = h.cholesky().ok_or(condition)?.inverse();
    Ok(symmetrize(&inv))
}
