//! Return panels, sample moments, regularizers and portfolio weights.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::linalg::{check_psd, ensure_finite, ensure_finite_vec, Resolvent};
use crate::scalar::Scalar;

/// An `n x p` matrix of per-period returns (rows are periods, columns assets).
#[derive(Debug, Clone)]
pub struct ReturnsPanel<T: Scalar> {
    returns: DMatrix<T>,
    dates: Option<Vec<NaiveDate>>,
    assets: Vec<String>,
}

impl<T: Scalar> ReturnsPanel<T> {
    pub fn new(returns: DMatrix<T>, dates: Option<Vec<NaiveDate>>, assets: Option<Vec<String>>) -> Result<Self> {
        let (n, p) = returns.shape();
        if n < 2 {
            return Err(Error::InvalidInput(format!("panel needs at least 2 periods, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidInput("panel has no assets".into()));
        }
        ensure_finite(&returns, "returns panel")?;
        if let Some(d) = &dates {
            if d.len() != n {
                return Err(dims("panel dates", n, d.len()));
            }
            if let Some(w) = d.windows(2).find(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!(
                    "dates must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        let assets = match assets {
            Some(a) if a.len() != p => return Err(dims("panel asset names", p, a.len())),
            Some(a) => a,
            None => (0..p).map(|j| format!("a{j}")).collect(),
        };
        Ok(Self { returns, dates, assets })
    }

    pub fn from_matrix(returns: DMatrix<T>) -> Result<Self> {
        Self::new(returns, None, None)
    }

    pub fn returns(&self) -> &DMatrix<T> {
        &self.returns
    }

    pub fn dates(&self) -> Option<&[NaiveDate]> {
        self.dates.as_deref()
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn n(&self) -> usize {
        self.returns.nrows()
    }

    pub fn p(&self) -> usize {
        self.returns.ncols()
    }

    /// Rows `start..end` as a new panel.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        let rows = self.returns.rows(start, end - start).into_owned();
        let dates = self.dates.as_ref().map(|d| d[start..end].to_vec());
        Self::new(rows, dates, Some(self.assets.clone()))
    }
}

/// How the mean used for centering was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanSource {
    /// A supplied population mean.
    Known,
    /// The column sample mean of the panel.
    Sample,
}

/// Sample mean and covariance of a panel, with the centered data retained.
#[derive(Debug, Clone)]
pub struct SampleMoments<T: Scalar> {
    pub mu_hat: DVector<T>,
    pub sigma_hat: DMatrix<T>,
    /// `X = R - 1 (mu + r0)'`, the data the covariance is built from.
    pub centered: DMatrix<T>,
    pub n: usize,
    pub p: usize,
    pub mean_source: MeanSource,
}

impl<T: Scalar> SampleMoments<T> {
    /// Concentration ratio `p / n`.
    pub fn c(&self) -> T {
        T::from_count(self.p) / T::from_count(self.n)
    }
}

/// Computes excess-return moments. With `known_mu` the data are centered at
/// `known_mu + risk_free`; otherwise at the column means. The covariance
/// divisor is `n` in both cases.
pub fn compute_sample_moments<T: Scalar>(
    panel: &ReturnsPanel<T>,
    known_mu: Option<&DVector<T>>,
    risk_free: T,
) -> Result<SampleMoments<T>> {
    let r = panel.returns();
    let (n, p) = r.shape();
    if !risk_free.is_finite_value() {
        return Err(Error::NonFinite("risk-free rate"));
    }
    let (mu_hat, mean_source) = match known_mu {
        Some(mu) => {
            if mu.len() != p {
                return Err(dims("known mean", p, mu.len()));
            }
            ensure_finite_vec(mu, "known mean")?;
            (mu.clone(), MeanSource::Known)
        }
        None => {
            let means = r.row_mean().transpose();
            (means.add_scalar(-risk_free), MeanSource::Sample)
        }
    };
    let shift = mu_hat.add_scalar(risk_free);
    let mut centered = r.clone();
    for mut row in centered.row_iter_mut() {
        row -= shift.transpose();
    }
    let sigma_hat = (centered.transpose() * &centered) / T::from_count(n);
    let sigma_hat = crate::linalg::symmetrize(&sigma_hat);
    Ok(SampleMoments { mu_hat, sigma_hat, centered, n, p, mean_source })
}

/// A symmetric PSD ridge term added to the sample covariance.
#[derive(Debug, Clone)]
pub struct Regularizer<T: Scalar> {
    matrix: DMatrix<T>,
    label: String,
    scale: Option<T>,
    is_zero: bool,
    allow_pseudo: bool,
}

impl<T: Scalar> Regularizer<T> {
    /// Validates that `matrix` is symmetric PSD.
    pub fn new(matrix: DMatrix<T>, label: impl Into<String>) -> Result<Self> {
        check_psd(&matrix, "regularizer")?;
        let is_zero = matrix.iter().all(|x| *x == T::zero());
        Ok(Self { matrix, label: label.into(), scale: None, is_zero, allow_pseudo: is_zero })
    }

    /// `Q = 0`, solved through the pseudo-inverse when singular.
    pub fn zero(p: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(p, p),
            label: "Q=0".into(),
            scale: Some(T::zero()),
            is_zero: true,
            allow_pseudo: true,
        }
    }

    pub fn identity(p: usize, q: T) -> Result<Self> {
        Self::scaled_trusted(&DMatrix::identity(p, p), q, "I")
    }

    /// `q * base` for a base already known to be PSD.
    pub(crate) fn scaled_trusted(base: &DMatrix<T>, q: T, base_label: &str) -> Result<Self> {
        if !q.is_finite_value() || q < T::zero() {
            return Err(Error::InvalidInput(format!("regularizer scale must be finite and >= 0, got {q}")));
        }
        let is_zero = q == T::zero() || base.iter().all(|x| *x == T::zero());
        Ok(Self {
            matrix: base * q,
            label: format!("{}*{}", q, base_label),
            scale: Some(q),
            is_zero,
            allow_pseudo: is_zero,
        })
    }

    /// `q * base` with `base` validated as symmetric PSD.
    pub fn scaled(base: &DMatrix<T>, q: T, base_label: &str) -> Result<Self> {
        check_psd(base, "regularizer base")?;
        Self::scaled_trusted(base, q, base_label)
    }

    /// Allows falling back to the pseudo-inverse when `Sigma_hat + Q` is singular.
    pub fn with_pseudo_inverse(mut self, allow: bool) -> Self {
        self.allow_pseudo = allow;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn scale(&self) -> Option<T> {
        self.scale
    }

    pub fn is_zero(&self) -> bool {
        self.is_zero
    }

    pub fn allows_pseudo(&self) -> bool {
        self.allow_pseudo
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `(Sigma_hat + Q)^{-1}`, or its pseudo-inverse where permitted.
    pub fn resolvent(&self, sigma_hat: &DMatrix<T>) -> Result<Resolvent<T>> {
        Resolvent::new(sigma_hat, &self.matrix, self.is_zero, self.allow_pseudo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Weights sum to one.
    Budget,
    /// Absolute weights sum to one.
    L1,
}

#[derive(Debug, Clone)]
pub struct PortfolioWeights<T: Scalar> {
    pub weights: DVector<T>,
    pub normalization: Normalization,
}

impl<T: Scalar> PortfolioWeights<T> {
    pub fn l1_norm(&self) -> T {
        self.weights.iter().fold(T::zero(), |acc, w| acc + w.abs())
    }

    pub fn sum(&self) -> T {
        self.weights.sum()
    }
}

/// Mean-variance direction `(Sigma_hat + Q)^{-1} mu`, scaled to unit L1 norm.
pub fn mv_weights<T: Scalar>(
    moments: &SampleMoments<T>,
    mu: &DVector<T>,
    reg: &Regularizer<T>,
) -> Result<PortfolioWeights<T>> {
    check_dims(moments, reg)?;
    if mu.len() != moments.p {
        return Err(dims("mean vector", moments.p, mu.len()));
    }
    let direction = reg.resolvent(&moments.sigma_hat)?.apply(mu);
    let l1 = direction.iter().fold(T::zero(), |acc, w| acc + w.abs());
    if l1 == T::zero() || !l1.is_finite_value() {
        return Err(Error::Degenerate("mean-variance direction is zero".into()));
    }
    Ok(PortfolioWeights { weights: direction / l1, normalization: Normalization::L1 })
}

/// Global minimum-variance weights `(Sigma_hat + Q)^{-1} 1 / 1'(Sigma_hat + Q)^{-1} 1`.
pub fn gmv_weights<T: Scalar>(moments: &SampleMoments<T>, reg: &Regularizer<T>) -> Result<PortfolioWeights<T>> {
    check_dims(moments, reg)?;
    let ones = DVector::from_element(moments.p, T::one());
    let direction = reg.resolvent(&moments.sigma_hat)?.apply(&ones);
    let total = direction.sum();
    if total.abs() <= T::default_epsilon() || !total.is_finite_value() {
        return Err(Error::Degenerate("minimum-variance budget is zero".into()));
    }
    Ok(PortfolioWeights { weights: direction / total, normalization: Normalization::Budget })
}

pub(crate) fn check_dims<T: Scalar>(moments: &SampleMoments<T>, reg: &Regularizer<T>) -> Result<()> {
    if reg.dim() != moments.p {
        return Err(dims("regularizer", moments.p, reg.dim()));
    }
    Ok(())
}
