//! Synthetic designs, Gaussian sampling and the Monte Carlo harness.

mod design;
mod montecarlo;
mod sampling;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use design::{gen_mu, gen_q, gen_sigma, Design, QFamily};
pub use montecarlo::{
    run_monte_carlo, run_monte_carlo_streams, ArgmaxSummary, CellSummary, McTask, MonteCarloReport, TrialRecord,
};
pub use sampling::{rng_stream, sample_returns, GaussianSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    /// `diag(lambda) + 2 11'`.
    Sigma0,
    /// `diag(lambda)`.
    Sigma1,
    /// `Sigma0` plus two orthogonal rank-one factors orthogonal to `1`.
    Sigma2,
    /// `diag(lambda) + 2 11' + xi xi'` with Gamma-distributed loadings.
    Sigma3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuKind {
    /// Sparse signed mean with unit norm.
    Mu0,
    /// Uniform on `[-sqrt(2/p), sqrt(2/p)]`.
    Mu1,
    /// `Mu1 + 2`.
    Mu2,
    /// `p^{1/4} Mu0 + 2`.
    Mu3,
    /// `Mu0 + 2 + xi`, sharing the loadings of `Sigma3`.
    Mu4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QKind {
    /// `q Q0`, `Q0 = diag(3 on the first half, 1 on the second)`.
    Q0Scaled,
    /// `0.1 Q0 + q diag(lambda)`.
    Q1,
    /// `0.5 I + q Q0`.
    Q2,
    /// `q Sigma0`.
    Q3,
    /// `q I`.
    IdentityScaled,
    /// `q diag(lambda)`.
    LambdaScaled,
    Zero,
    /// `offset + q base` from [`DesignSpec::custom`].
    Custom,
}

/// A user-supplied regularizer family.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomFamily {
    pub offset: Option<DMatrix<f64>>,
    pub base: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub p: usize,
    pub sigma: SigmaKind,
    pub mu: MuKind,
    pub q: QKind,
    pub q_grid: Vec<f64>,
    pub seed: u64,
    #[serde(skip)]
    pub custom: Option<CustomFamily>,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        let p = self.p;
        if p < 2 {
            return Err(Error::InvalidInput(format!("design needs p >= 2, got {p}")));
        }
        if matches!(self.mu, MuKind::Mu0 | MuKind::Mu3 | MuKind::Mu4) && p % 10 != 0 {
            return Err(Error::InvalidInput(format!("sparse mean designs need p divisible by 10, got {p}")));
        }
        if matches!(self.q, QKind::Q0Scaled | QKind::Q1 | QKind::Q2) && p % 2 != 0 {
            return Err(Error::InvalidInput(format!("Q0-based regularizers need even p, got {p}")));
        }
        if self.q_grid.is_empty() {
            return Err(Error::InvalidInput("regularization grid is empty".into()));
        }
        if self.q_grid.iter().any(|q| !q.is_finite() || *q < 0.0) {
            return Err(Error::InvalidInput("grid values must be finite and non-negative".into()));
        }
        if self.q_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("grid must be strictly increasing".into()));
        }
        if self.q != QKind::Zero && self.q_grid.contains(&0.0) {
            return Err(Error::InvalidInput("grid scale 0 is only valid for the zero regularizer".into()));
        }
        if self.q == QKind::Custom && self.custom.is_none() {
            return Err(Error::InvalidInput("custom regularizer selected but no matrices supplied".into()));
        }
        Ok(())
    }
}

/// `(1:30)/5` below `c = 1`, `(1:30)/1.5` above.
pub fn default_q_grid(c: f64) -> Vec<f64> {
    let step = if c < 1.0 { 5.0 } else { 1.5 };
    (1..=30).map(|k| k as f64 / step).collect()
}
