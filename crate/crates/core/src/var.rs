//! Pooled least-squares VAR fitting over independent trials, BIC order
//! selection and the implied parametric spectral matrix.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::parallel;
use crate::spectral::{symmetrize, CMatrix, EstimatorTag, FrequencyGrid, SpectralEstimate};
use crate::timeseries::MultiTrialSeries;

/// Gram condition number above which a fit is flagged as ill-conditioned.
pub const GRAM_WARN_CONDITION: f64 = 1e10;
/// Gram condition number above which a fit is refused.
pub const GRAM_MAX_CONDITION: f64 = 1e14;

/// `X(t) = Σ_k Φ_k X(t−k) + Z(t)` with `Cov Z = Σ_Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    coefficients: Vec<DMatrix<f64>>,
    sigma_z: DMatrix<f64>,
    gram_condition: Option<f64>,
}

/// Gelfand's formula `ρ = lim ‖Cⁿ‖^{1/n}` evaluated at `n = 2⁶⁰` by
/// repeated normalized squaring.
fn radius_by_squaring(mut m: DMatrix<f64>) -> f64 {
    let mut log_norm = 0.0;
    let mut power = 1.0;
    for _ in 0..60 {
        let s = m.norm();
        if s == 0.0 {
            return 0.0;
        }
        m /= s;
        log_norm += s.ln() / power;
        m = &m * &m;
        power *= 2.0;
    }
    (log_norm + m.norm().ln() / power).exp()
}

impl VarModel {
    pub fn new(coefficients: Vec<DMatrix<f64>>, sigma_z: DMatrix<f64>) -> Result<Self> {
        let p = sigma_z.nrows();
        if p == 0 || !sigma_z.is_square() {
            return Err(Error::Dimension("innovation covariance must be square".into()));
        }
        if let Some(k) = coefficients.iter().position(|c| c.shape() != (p, p)) {
            return Err(Error::Dimension(format!(
                "coefficient matrix {} is not {p}x{p}",
                k + 1
            )));
        }
        let asym = (&sigma_z - sigma_z.transpose()).amax();
        if asym > 1e-10 * sigma_z.amax().max(1.0) {
            return Err(Error::InvalidParameter(
                "innovation covariance is not symmetric".into(),
            ));
        }
        Ok(Self {
            coefficients,
            sigma_z,
            gram_condition: None,
        })
    }

    /// Order-zero model: white noise with covariance `sigma_z`.
    pub fn white_noise(sigma_z: DMatrix<f64>) -> Result<Self> {
        Self::new(Vec::new(), sigma_z)
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn dim(&self) -> usize {
        self.sigma_z.nrows()
    }

    /// `Φ_1..Φ_K`.
    pub fn coefficients(&self) -> &[DMatrix<f64>] {
        &self.coefficients
    }

    pub fn sigma_z(&self) -> &DMatrix<f64> {
        &self.sigma_z
    }

    /// Condition number of the pooled regressor Gram matrix, for fitted
    /// models.
    pub fn gram_condition(&self) -> Option<f64> {
        self.gram_condition
    }

    /// True when the fit's Gram matrix exceeded [`GRAM_WARN_CONDITION`].
    pub fn ill_conditioned(&self) -> bool {
        self.gram_condition.is_some_and(|c| c > GRAM_WARN_CONDITION)
    }

    /// `PK × PK` companion matrix.
    pub fn companion(&self) -> DMatrix<f64> {
        let p = self.dim();
        let k = self.order().max(1);
        let mut f = DMatrix::zeros(p * k, p * k);
        for (i, phi) in self.coefficients.iter().enumerate() {
            f.view_mut((0, i * p), (p, p)).copy_from(phi);
        }
        for i in 1..k {
            f.view_mut((i * p, (i - 1) * p), (p, p))
                .copy_from(&DMatrix::identity(p, p));
        }
        f
    }

    /// Spectral radius of the companion matrix; `< 1` means stable.
    pub fn spectral_radius(&self) -> f64 {
        if self.order() == 0 {
            return 0.0;
        }
        let companion = self.companion();
        match Schur::try_new(companion.clone(), f64::EPSILON, 10_000) {
            Some(schur) => schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max),
            None => radius_by_squaring(companion),
        }
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0
    }

    /// `A(ω) = I − Σ_k Φ_k e^{−iωk}`.
    pub fn transfer(&self, omega: f64) -> CMatrix {
        let p = self.dim();
        let mut a = CMatrix::identity(p, p);
        for (k, phi) in self.coefficients.iter().enumerate() {
            let e = Complex64::from_polar(1.0, -omega * (k + 1) as f64);
            a.zip_apply(phi, |z, c| *z -= e * c);
        }
        a
    }
}

/// Per-trial sufficient statistics of the conditional LS problem.
struct TrialMoments {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
}

fn design(trial: &[f64], p: usize, t: usize, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let len = t - k;
    // regressors for times t = k+1..T (1-based): lags 1..k stacked
    let y = DMatrix::from_fn(p * k, len, |row, col| {
        let lag = row / p + 1;
        let ch = row % p;
        trial[ch * t + k + col - lag]
    });
    let x = DMatrix::from_fn(p, len, |ch, col| trial[ch * t + k + col]);
    (y, x)
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Trial indices in a canonical, data-determined order. Reductions in this
/// order make pooled estimates independent of how trials were listed.
fn canonical_order(trials: &MultiTrialSeries) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..trials.n_trials()).collect();
    idx.sort_by(|&a, &b| lexicographic(trials.trial(a), trials.trial(b)));
    idx
}

fn sum_in_order(parts: &[DMatrix<f64>], order: &[usize]) -> DMatrix<f64> {
    let mut acc = parts[order[0]].clone();
    for &i in &order[1..] {
        acc += &parts[i];
    }
    acc
}

/// Pooled LS fit of a VAR(`order`) over all trials, conditioning on the
/// first `order` samples of each trial. `Σ̂_Z` uses divisor `N(T−K) − PK`.
pub fn fit_var_ls(trials: &MultiTrialSeries, order: usize) -> Result<VarModel> {
    if order == 0 {
        return Err(Error::InvalidParameter("VAR order must be >= 1".into()));
    }
    let (n, p, t) = (trials.n_trials(), trials.n_channels(), trials.n_samples());
    if t <= order {
        return Err(Error::InsufficientData(format!(
            "VAR({order}) needs T > {order}, got T={t}"
        )));
    }
    let effective = n * (t - order);
    if effective <= p * order {
        return Err(Error::InsufficientData(format!(
            "VAR({order}) with P={p} needs N(T-K) > PK, got {effective} <= {}",
            p * order
        )));
    }
    let moments = parallel::map_indexed(n, |i| {
        let (y, x) = design(trials.trial(i), p, t, order);
        TrialMoments {
            gram: &y * y.transpose(),
            cross: &y * x.transpose(),
        }
    });
    let order_idx = canonical_order(trials);
    let grams: Vec<DMatrix<f64>> = moments.iter().map(|m| m.gram.clone()).collect();
    let crosses: Vec<DMatrix<f64>> = moments.into_iter().map(|m| m.cross).collect();
    let gram = sum_in_order(&grams, &order_idx);
    let cross = sum_in_order(&crosses, &order_idx);

    let eig = gram.clone().symmetric_eigenvalues();
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= GRAM_MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let chol = gram
        .cholesky()
        .ok_or(Error::RankDeficient { condition })?;
    // B' = G^{-1} C, B is P x PK
    let b = chol.solve(&cross).transpose();

    let residual_cov = parallel::map_indexed(n, |i| {
        let (y, x) = design(trials.trial(i), p, t, order);
        let e = x - &b * y;
        &e * e.transpose()
    });
    let sse = sum_in_order(&residual_cov, &order_idx);
    let sigma = (&sse + sse.transpose()) * (0.5 / (effective - p * order) as f64);

    let coefficients = (0..order)
        .map(|k| b.columns(k * p, p).into_owned())
        .collect();
    let mut model = VarModel::new(coefficients, sigma)?;
    model.gram_condition = Some(condition);
    Ok(model)
}

/// Information criterion `log|Σ̂_Z(κ)| + κP² log(NT)/(NT)` for `κ = 1..=k_max`.
pub fn bic_curve(trials: &MultiTrialSeries, k_max: usize) -> Result<Vec<f64>> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be >= 1".into()));
    }
    let p = trials.n_channels() as f64;
    let nt = (trials.n_trials() * trials.n_samples()) as f64;
    (1..=k_max)
        .map(|kappa| {
            let model = fit_var_ls(trials, kappa)?;
            let logdet = log_det_spd(model.sigma_z()).ok_or({
                Error::RankDeficient {
                    condition: f64::INFINITY,
                }
            })?;
            Ok(logdet + nt.ln() / nt * kappa as f64 * p * p)
        })
        .collect()
}

fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// BIC-minimizing order in `1..=k_max`; ties go to the smaller order.
pub fn bic_select_order(trials: &MultiTrialSeries, k_max: usize) -> Result<usize> {
    let ic = bic_curve(trials, k_max)?;
    Ok(crate::smoothing::argmin_first(&ic) + 1)
}

/// `V(ω) = (2π)⁻¹ A(ω)⁻¹ Σ_Z A(ω)⁻*` on every grid frequency.
pub fn var_spectrum(model: &VarModel, grid: &FrequencyGrid) -> Result<SpectralEstimate> {
    let sigma = model.sigma_z().map(Complex64::from);
    let scale = Complex64::from(1.0 / (2.0 * PI));
    let matrices = (0..grid.len())
        .map(|j| {
            let omega = grid.omega(j);
            let a = model.transfer(omega);
            let h = a
                .clone()
                .try_inverse()
                .ok_or(Error::NearUnitRoot { omega })?;
            if a.norm() * h.norm() > 1e12 {
                return Err(Error::NearUnitRoot { omega });
            }
            Ok(symmetrize(&(&h * &sigma * h.adjoint())) * scale)
        })
        .collect::<Result<Vec<_>>>()?;
    SpectralEstimate::new(grid.clone(), matrices, EstimatorTag::Var)
}
