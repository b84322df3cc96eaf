use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::sampling::rng_stream;
use super::{DesignSpec, MuKind, QKind, SigmaKind};
use crate::error::{Error, Result};
use crate::moments::Regularizer;

// Design components draw from their own streams so that changing one kind
// leaves the others untouched.
const STREAM_BASE: u64 = 1 << 40;
const STREAM_LAMBDA: u64 = STREAM_BASE;
const STREAM_SUPPORT: u64 = STREAM_BASE + 1;
const STREAM_FACTORS: u64 = STREAM_BASE + 2;
const STREAM_LOADINGS: u64 = STREAM_BASE + 3;
const STREAM_UNIFORM: u64 = STREAM_BASE + 4;

const LAMBDA_MIN: f64 = 0.01;
const LAMBDA_MAX: f64 = 9.0;

/// All random ingredients of a synthetic experiment, fixed across trials.
#[derive(Debug, Clone)]
pub struct Design {
    pub spec: DesignSpec,
    /// Idiosyncratic variances, sorted descending.
    pub lambda: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// `diag(lambda) + 2 11'`, the reference covariance for `Q3`.
    pub sigma0: DMatrix<f64>,
    pub mu: DVector<f64>,
    /// Diagonal of `Q0`.
    pub q0: DVector<f64>,
    /// Gamma(1, 1) loadings shared by `Sigma3` and `Mu4`.
    pub loadings: DVector<f64>,
    pub family: QFamily,
}

/// `Q(q) = offset + q base`; `base` is `None` for the zero regularizer.
#[derive(Debug, Clone)]
pub struct QFamily {
    pub offset: Option<DMatrix<f64>>,
    pub base: Option<DMatrix<f64>>,
    pub label: String,
}

impl QFamily {
    pub fn regularizer(&self, q: f64) -> Result<Regularizer<f64>> {
        let p = match (&self.base, &self.offset) {
            (Some(b), _) => b.nrows(),
            (None, Some(o)) => o.nrows(),
            (None, None) => return Err(Error::InvalidInput("family has no dimension".into())),
        };
        let mut m = DMatrix::zeros(p, p);
        if let Some(b) = &self.base {
            m += b * q;
        }
        if let Some(o) = &self.offset {
            m += o;
        }
        let reg = Regularizer::new(m, format!("{}[q={}]", self.label, q))?;
        Ok(if reg.is_zero() { reg.with_pseudo_inverse(true) } else { reg })
    }

    pub fn zero(p: usize) -> Self {
        Self { offset: Some(DMatrix::zeros(p, p)), base: None, label: "Q=0".into() }
    }
}

fn truncated_inverse_gamma(p: usize, seed: u64) -> DVector<f64> {
    let mut rng = rng_stream(seed, STREAM_LAMBDA);
    let mut values = Vec::with_capacity(p);
    while values.len() < p {
        let e: f64 = rng.sample(Exp1);
        let lambda = 1.0 / e;
        if (LAMBDA_MIN..=LAMBDA_MAX).contains(&lambda) {
            values.push(lambda);
        }
    }
    values.sort_by(|a, b| b.partial_cmp(a).expect("finite variances"));
    DVector::from_vec(values)
}

/// Two vectors orthogonal to `1` and to each other, each with squared norm `p`.
fn orthogonal_factors(p: usize, seed: u64) -> (DVector<f64>, DVector<f64>) {
    let mut rng = rng_stream(seed, STREAM_FACTORS);
    let mut draw = || DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let unit = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    let mut a = draw();
    a -= &unit * unit.dot(&a);
    a.normalize_mut();
    let mut b = draw();
    b -= &unit * unit.dot(&b);
    b -= &a * a.dot(&b);
    b.normalize_mut();
    let scale = (p as f64).sqrt();
    (a * scale, b * scale)
}

fn sparse_mean(p: usize, seed: u64) -> DVector<f64> {
    let mut idx: Vec<usize> = (0..p).collect();
    idx.shuffle(&mut rng_stream(seed, STREAM_SUPPORT));
    let k = p / 10;
    let level = (5.0 / p as f64).sqrt();
    let mut mu = DVector::zeros(p);
    for &i in &idx[..k] {
        mu[i] = level;
    }
    for &i in &idx[k..2 * k] {
        mu[i] = -level;
    }
    mu
}

impl Design {
    pub fn generate(spec: &DesignSpec) -> Result<Self> {
        spec.validate()?;
        let p = spec.p;
        let seed = spec.seed;
        let lambda = truncated_inverse_gamma(p, seed);
        let ones = DVector::from_element(p, 1.0);
        let diag = DMatrix::from_diagonal(&lambda);
        let sigma0 = &diag + &ones * ones.transpose() * 2.0;
        let loadings = {
            let mut rng = rng_stream(seed, STREAM_LOADINGS);
            DVector::from_fn(p, |_, _| rng.sample::<f64, _>(Exp1))
        };
        let sigma = match spec.sigma {
            SigmaKind::Sigma0 => sigma0.clone(),
            SigmaKind::Sigma1 => diag.clone(),
            SigmaKind::Sigma2 => {
                let (a, b) = orthogonal_factors(p, seed);
                &sigma0 + &a * a.transpose() + &b * b.transpose()
            }
            SigmaKind::Sigma3 => &sigma0 + &loadings * loadings.transpose(),
        };
        let mu = match spec.mu {
            MuKind::Mu0 => sparse_mean(p, seed),
            MuKind::Mu1 | MuKind::Mu2 => {
                let bound = (2.0 / p as f64).sqrt();
                let mut rng = rng_stream(seed, STREAM_UNIFORM);
                let mu1 = DVector::from_fn(p, |_, _| rng.random_range(-bound..bound));
                if spec.mu == MuKind::Mu2 {
                    mu1.add_scalar(2.0)
                } else {
                    mu1
                }
            }
            MuKind::Mu3 => (sparse_mean(p, seed) * (p as f64).powf(0.25)).add_scalar(2.0),
            MuKind::Mu4 => sparse_mean(p, seed).add_scalar(2.0) + &loadings,
        };
        let q0 = DVector::from_fn(p, |i, _| if i < p / 2 { 3.0 } else { 1.0 });
        let family = gen_q(spec, &lambda, &sigma0)?;
        Ok(Self { spec: spec.clone(), lambda, sigma, sigma0, mu, q0, loadings, family })
    }

    pub fn regularizer(&self, q: f64) -> Result<Regularizer<f64>> {
        self.family.regularizer(q)
    }
}

pub fn gen_sigma(spec: &DesignSpec) -> Result<DMatrix<f64>> {
    Ok(Design::generate(spec)?.sigma)
}

pub fn gen_mu(spec: &DesignSpec) -> Result<DVector<f64>> {
    Ok(Design::generate(spec)?.mu)
}

/// Regularizer family for `spec.q`, given the design's variances and `Sigma0`.
pub fn gen_q(spec: &DesignSpec, lambda: &DVector<f64>, sigma0: &DMatrix<f64>) -> Result<QFamily> {
    let p = spec.p;
    let q0 = || DMatrix::from_diagonal(&DVector::from_fn(p, |i, _| if i < p / 2 { 3.0 } else { 1.0 }));
    let family = |offset, base, label: &str| QFamily { offset, base: Some(base), label: label.into() };
    Ok(match spec.q {
        QKind::Q0Scaled => family(None, q0(), "q*Q0"),
        QKind::Q1 => family(Some(q0() * 0.1), DMatrix::from_diagonal(lambda), "0.1*Q0+q*diag(lambda)"),
        QKind::Q2 => family(Some(DMatrix::identity(p, p) * 0.5), q0(), "0.5*I+q*Q0"),
        QKind::Q3 => family(None, sigma0.clone(), "q*Sigma0"),
        QKind::IdentityScaled => family(None, DMatrix::identity(p, p), "q*I"),
        QKind::LambdaScaled => family(None, DMatrix::from_diagonal(lambda), "q*diag(lambda)"),
        QKind::Zero => QFamily::zero(p),
        QKind::Custom => {
            let custom = spec
                .custom
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("custom regularizer matrices missing".into()))?;
            if custom.base.shape() != (p, p) {
                return Err(crate::error::dims("custom regularizer base", p, custom.base.nrows()));
            }
            family(custom.offset.clone(), custom.base.clone(), "custom")
        }
    })
}
