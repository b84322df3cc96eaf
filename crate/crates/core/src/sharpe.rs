//! Out-of-sample Sharpe ratios of ridge-regularized portfolios and their
//! consistent estimators.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::linalg::{check_psd, quad_form, symmetrize, trace_product, Resolvent};
use crate::moments::{check_dims, MeanSource, Regularizer, SampleMoments};
use crate::scalar::Scalar;

/// Negative quadratic forms smaller than this are rounding noise.
pub const QUAD_CLAMP: f64 = 1e-12;

/// Correction factors below this magnitude are treated as zero. With `Q = 0`
/// and `p >= n` the factor is exactly zero up to rounding.
pub const CORRECTION_FLOOR: f64 = 1e-10;

pub(crate) fn check_correction<T: Scalar>(correction: T) -> Result<()> {
    if !(correction.abs() > T::lit(CORRECTION_FLOOR)) {
        return Err(Error::Degenerate(format!("variance correction factor {correction} is zero")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharpeMode {
    /// True out-of-sample ratio, needs the population covariance.
    Oracle,
    /// Estimator for a known mean.
    KnownMean,
    /// Estimator when the mean is replaced by the sample mean.
    UnknownMean,
    /// True ratio of the sample-mean portfolio.
    OracleUnknownMean,
    /// True ratio of the minimum-variance portfolio.
    GmvOracle,
    /// Estimated ratio (inverse volatility) of the minimum-variance portfolio.
    GmvEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpeEstimate<T> {
    pub value: T,
    /// `T1`, less the bias term in unknown-mean mode.
    pub numerator: T,
    /// `sqrt(|T2|)`, with the correction folded in for estimators.
    pub denominator: T,
    /// `1 - (c/p) tr(Sigma_hat M)`; one for oracle modes.
    pub correction: T,
    /// `t / (n - t)` with `t = tr(Sigma_hat M)`; zero outside unknown-mean mode.
    pub bias: T,
    pub mode: SharpeMode,
}

fn clamp_nonneg<T: Scalar>(x: T, what: &str) -> Result<T> {
    if x >= T::zero() {
        Ok(x)
    } else if -x < T::lit(QUAD_CLAMP) {
        Ok(T::zero())
    } else {
        Err(Error::Degenerate(format!("{what} is negative ({x})")))
    }
}

fn ratio<T: Scalar>(numerator: T, denominator: T) -> Result<T> {
    if denominator <= T::zero() || !denominator.is_finite_value() {
        return Err(Error::Degenerate("Sharpe ratio denominator is zero".into()));
    }
    Ok(numerator / denominator)
}

/// `1 - (c/p) tr(Sigma_hat M)`.
pub fn correction_factor<T: Scalar>(moments: &SampleMoments<T>, resolvent: &Resolvent<T>) -> T {
    let p = T::from_count(moments.p);
    T::one() - moments.c() / p * trace_product(&moments.sigma_hat, resolvent.matrix())
}

fn check_vec<T: Scalar>(v: &DVector<T>, p: usize, what: &'static str) -> Result<()> {
    if v.len() != p {
        return Err(dims(what, p, v.len()));
    }
    crate::linalg::ensure_finite_vec(v, what)
}

fn check_cov<T: Scalar>(sigma: &DMatrix<T>, p: usize) -> Result<()> {
    if sigma.shape() != (p, p) {
        return Err(dims("population covariance", format!("{p}x{p}"), format!("{:?}", sigma.shape())));
    }
    check_psd(sigma, "population covariance")
}

fn require_direction<T: Scalar>(v: &DVector<T>) -> Result<()> {
    if v.iter().all(|x| *x == T::zero()) {
        return Err(Error::Degenerate("direction vector is zero".into()));
    }
    Ok(())
}

fn oracle_for_direction<T: Scalar>(
    left: &DVector<T>,
    right: &DVector<T>,
    moments: &SampleMoments<T>,
    reg: &Regularizer<T>,
    sigma: &DMatrix<T>,
    mode: SharpeMode,
) -> Result<SharpeEstimate<T>> {
    let resolvent = reg.resolvent(&moments.sigma_hat)?;
    let b = resolvent.apply(left);
    let numerator = b.dot(right);
    let denominator = clamp_nonneg(quad_form(sigma, &b), "portfolio variance")?.sqrt();
    Ok(SharpeEstimate {
        value: ratio(numerator, denominator)?,
        numerator,
        denominator,
        correction: T::one(),
        bias: T::zero(),
        mode,
    })
}

/// `mu' M mu / sqrt(mu' M Sigma M mu)` with `M = (Sigma_hat + Q)^{-1}`.
pub fn sr_oracle<T: Scalar>(
    mu: &DVector<T>,
    moments: &SampleMoments<T>,
    reg: &Regularizer<T>,
    sigma: &DMatrix<T>,
) -> Result<SharpeEstimate<T>> {
    check_dims(moments, reg)?;
    check_vec(mu, moments.p, "mean vector")?;
    check_cov(sigma, moments.p)?;
    require_direction(mu)?;
    oracle_for_direction(mu, mu, moments, reg, sigma, SharpeMode::Oracle)
}

/// Known-mean estimator: `correction * mu' M mu / sqrt(mu' M Sigma_hat M mu)`.
pub fn sr_hat_known_mu<T: Scalar>(
    mu: &DVector<T>,
    moments: &SampleMoments<T>,
    reg: &Regularizer<T>,
) -> Result<SharpeEstimate<T>> {
    check_dims(moments, reg)?;
    check_vec(mu, moments.p, "mean vector")?;
    require_direction(mu)?;
    let resolvent = reg.resolvent(&moments.sigma_hat)?;
    estimate_for_direction(mu, moments, &resolvent, SharpeMode::KnownMean, T::zero())
}

fn estimate_for_direction<T: Scalar>(
    v: &DVector<T>,
    moments: &SampleMoments<T>,
    resolvent: &Resolvent<T>,
    mode: SharpeMode,
    bias: T,
) -> Result<SharpeEstimate<T>> {
    let correction = correction_factor(moments, resolvent);
    check_correction(correction)?;
    let b = resolvent.apply(v);
    let t1 = v.dot(&b);
    let numerator = t1 - bias;
    let in_sample = clamp_nonneg(quad_form(&moments.sigma_hat, &b), "in-sample variance")?;
    let denominator = in_sample.sqrt() / correction.abs();
    Ok(SharpeEstimate {
        value: ratio(numerator, denominator)?,
        numerator,
        denominator,
        correction,
        bias,
        mode,
    })
}

fn require_sample_mean<T: Scalar>(moments: &SampleMoments<T>) -> Result<()> {
    if moments.mean_source != MeanSource::Sample {
        return Err(Error::InvalidInput(
            "unknown-mean estimation needs moments centered at the sample mean".into(),
        ));
    }
    Ok(())
}

/// Unknown-mean estimator: the sample-mean quadratic form is debiased by
/// `t / (n - t)`, `t = tr(Sigma_hat M)`.
pub fn sr_hat_unknown_mu<T: Scalar>(moments: &SampleMoments<T>, reg: &Regularizer<T>) -> Result<SharpeEstimate<T>> {
    check_dims(moments, reg)?;
    require_sample_mean(moments)?;
    require_direction(&moments.mu_hat)?;
    let resolvent = reg.resolvent(&moments.sigma_hat)?;
    let t = trace_product(&moments.sigma_hat, resolvent.matrix());
    let n = T::from_count(moments.n);
    if t >= n {
        return Err(Error::Degenerate(format!("trace term {t} is not below n = {n}")));
    }
    let bias = t / (n - t);
    estimate_for_direction(&moments.mu_hat, moments, &resolvent, SharpeMode::UnknownMean, bias)
}

/// True ratio of the sample-mean portfolio:
/// `mu_hat' M mu / sqrt(mu_hat' M Sigma M mu_hat)`.
pub fn sr_oracle_unknown_mu<T: Scalar>(
    moments: &SampleMoments<T>,
    reg: &Regularizer<T>,
    mu: &DVector<T>,
    sigma: &DMatrix<T>,
) -> Result<SharpeEstimate<T>> {
    check_dims(moments, reg)?;
    check_vec(mu, moments.p, "mean vector")?;
    check_cov(sigma, moments.p)?;
    require_direction(&moments.mu_hat)?;
    oracle_for_direction(&moments.mu_hat, mu, moments, reg, sigma, SharpeMode::OracleUnknownMean)
}

/// Minimum-variance ratio `1' M 1 / sqrt(1' M Sigma M 1)`; estimated from the
/// sample when `sigma` is `None`.
pub fn sr_gmv<T: Scalar>(
    moments: &SampleMoments<T>,
    reg: &Regularizer<T>,
    sigma: Option<&DMatrix<T>>,
) -> Result<SharpeEstimate<T>> {
    check_dims(moments, reg)?;
    let ones = DVector::from_element(moments.p, T::one());
    match sigma {
        Some(sigma) => {
            check_cov(sigma, moments.p)?;
            oracle_for_direction(&ones, &ones, moments, reg, sigma, SharpeMode::GmvOracle)
        }
        None => {
            let resolvent = reg.resolvent(&moments.sigma_hat)?;
            estimate_for_direction(&ones, moments, &resolvent, SharpeMode::GmvEstimate, T::zero())
        }
    }
}

/// `tr(M A) / sqrt(|tr(M Sigma M A)|)` for a PSD matrix `A`; the estimator
/// replaces `Sigma` by `Sigma_hat / correction^2` when `sigma` is `None`.
pub fn sr_for_matrix<T: Scalar>(
    a: &DMatrix<T>,
    moments: &SampleMoments<T>,
    reg: &Regularizer<T>,
    sigma: Option<&DMatrix<T>>,
) -> Result<SharpeEstimate<T>> {
    check_dims(moments, reg)?;
    if a.shape() != (moments.p, moments.p) {
        return Err(dims("direction matrix", moments.p, a.nrows()));
    }
    check_psd(a, "direction matrix")?;
    let resolvent = reg.resolvent(&moments.sigma_hat)?;
    let m = resolvent.matrix();
    let numerator = trace_product(m, a);
    let sandwich = |s: &DMatrix<T>| symmetrize(&(m * s * m));
    match sigma {
        Some(sigma) => {
            check_cov(sigma, moments.p)?;
            let t2 = trace_product(&sandwich(sigma), a);
            let denominator = clamp_nonneg(t2, "portfolio variance")?.sqrt();
            Ok(SharpeEstimate {
                value: ratio(numerator, denominator)?,
                numerator,
                denominator,
                correction: T::one(),
                bias: T::zero(),
                mode: SharpeMode::Oracle,
            })
        }
        None => {
            let correction = correction_factor(moments, &resolvent);
            check_correction(correction)?;
            let t2 = trace_product(&sandwich(&moments.sigma_hat), a) / (correction * correction);
            let denominator = t2.abs().sqrt();
            Ok(SharpeEstimate {
                value: ratio(numerator, denominator)?,
                numerator,
                denominator,
                correction,
                bias: T::zero(),
                mode: SharpeMode::KnownMean,
            })
        }
    }
}

/// Population maximum `sqrt(mu' Sigma^{-1} mu)`.
pub fn sr_max<T: Scalar>(mu: &DVector<T>, sigma: &DMatrix<T>) -> Result<T> {
    check_vec(mu, sigma.nrows(), "mean vector")?;
    check_cov(sigma, mu.len())?;
    let chol = Cholesky::new(symmetrize(sigma))
        .ok_or_else(|| Error::Singular("population covariance is singular".into()))?;
    Ok(clamp_nonneg(mu.dot(&chol.solve(mu)), "mu' Sigma^-1 mu")?.sqrt())
}

/// Limiting ratio of the plain sample-mean portfolio, `s^2 / sqrt(s^2 + c)`.
pub fn sr_limit_unknown<T: Scalar>(sr_max: T, c: T) -> T {
    let s2 = sr_max * sr_max;
    s2 / (s2 + c).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{compute_sample_moments, ReturnsPanel};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_panel(seed: u64, n: usize, p: usize) -> ReturnsPanel<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ReturnsPanel::from_matrix(DMatrix::from_fn(n, p, |_, j| rng.random_range(-1.0..1.0) + 0.05 * j as f64))
            .unwrap()
    }

    fn random_spd(seed: u64, p: usize) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(p, p) * 0.1
    }

    #[test]
    fn identity_covariance_oracle_is_one() {
        // Rows sqrt(3) e_i give a known-mean covariance of exactly I.
        let data = DMatrix::identity(3, 3) * 3f64.sqrt();
        let panel = ReturnsPanel::from_matrix(data).unwrap();
        let zero = DVector::zeros(3);
        let m = compute_sample_moments(&panel, Some(&zero), 0.0).unwrap();
        assert_relative_eq!(m.sigma_hat, DMatrix::identity(3, 3), epsilon = 1e-14);
        let mu = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let sr = sr_oracle(&mu, &m, &Regularizer::zero(3), &DMatrix::identity(3, 3)).unwrap();
        assert_relative_eq!(sr.value, 1.0, epsilon = 1e-14);
        assert_relative_eq!(sr_max(&mu, &DMatrix::identity(3, 3)).unwrap(), 1.0);
    }

    #[test]
    fn unregularized_estimator_is_scaled_in_sample_ratio() {
        let panel = random_panel(3, 40, 10);
        let mu = DVector::from_fn(10, |i, _| 0.1 + 0.01 * i as f64);
        let m = compute_sample_moments(&panel, Some(&mu), 0.0).unwrap();
        let est = sr_hat_known_mu(&mu, &m, &Regularizer::zero(10)).unwrap();
        let inv = m.sigma_hat.clone().try_inverse().unwrap();
        let expected = (1.0 - 0.25) * mu.dot(&(&inv * &mu)).sqrt();
        assert_relative_eq!(est.value, expected, max_relative = 1e-10);
        assert_relative_eq!(est.correction, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn matrix_form_agrees_with_vector_form() {
        let panel = random_panel(5, 30, 6);
        let mu = DVector::from_fn(6, |i, _| 0.2 - 0.05 * i as f64);
        let m = compute_sample_moments(&panel, Some(&mu), 0.0).unwrap();
        let reg = Regularizer::identity(6, 0.3).unwrap();
        let sigma = random_spd(5, 6);
        let a = &mu * mu.transpose();
        let v = sr_hat_known_mu(&mu, &m, &reg).unwrap();
        let mat = sr_for_matrix(&a, &m, &reg, None).unwrap();
        assert_relative_eq!(v.value, mat.value, max_relative = 1e-10);
        let v = sr_oracle(&mu, &m, &reg, &sigma).unwrap();
        let mat = sr_for_matrix(&a, &m, &reg, Some(&sigma)).unwrap();
        assert_relative_eq!(v.value, mat.value, max_relative = 1e-10);

        let ones = DVector::from_element(6, 1.0);
        let g = sr_gmv(&m, &reg, None).unwrap();
        let mat = sr_for_matrix(&(&ones * ones.transpose()), &m, &reg, None).unwrap();
        assert_relative_eq!(g.value, mat.value, max_relative = 1e-10);
        assert!(sr_for_matrix(&(-a), &m, &reg, None).is_err());
    }

    #[test]
    fn unknown_mean_requires_sample_moments() {
        let panel = random_panel(9, 30, 6);
        let mu = DVector::from_element(6, 0.1);
        let known = compute_sample_moments(&panel, Some(&mu), 0.0).unwrap();
        let reg = Regularizer::identity(6, 0.5).unwrap();
        assert!(sr_hat_unknown_mu(&known, &reg).is_err());
        let sample = compute_sample_moments(&panel, None, 0.0).unwrap();
        let est = sr_hat_unknown_mu(&sample, &reg).unwrap();
        assert!(est.bias > 0.0);
        assert_eq!(est.mode, SharpeMode::UnknownMean);
        assert_relative_eq!(est.value, est.numerator / est.denominator, max_relative = 1e-12);
    }

    #[test]
    fn zero_mean_and_limit() {
        let panel = random_panel(1, 20, 4);
        let m = compute_sample_moments(&panel, None, 0.0).unwrap();
        let reg = Regularizer::identity(4, 1.0).unwrap();
        assert!(sr_oracle(&DVector::zeros(4), &m, &reg, &DMatrix::identity(4, 4)).is_err());
        assert_eq!(sr_max::<f64>(&DVector::zeros(3), &DMatrix::identity(3, 3)).unwrap(), 0.0);
        assert_relative_eq!(sr_limit_unknown(1.0, 3.0), 0.5);
    }

    proptest! {
        #[test]
        fn oracle_never_exceeds_maximum(seed in 0u64..2000, q in 0.0f64..5.0) {
            let p = 5;
            let panel = random_panel(seed, 8, p);
            let mu = DVector::from_fn(p, |i, _| ((seed + i as u64) % 7) as f64 - 3.0);
            prop_assume!(mu.norm() > 0.0);
            let m = compute_sample_moments(&panel, Some(&mu), 0.0).unwrap();
            let sigma = random_spd(seed, p);
            let reg = Regularizer::identity(p, q).unwrap().with_pseudo_inverse(true);
            let sr = sr_oracle(&mu, &m, &reg, &sigma).unwrap();
            prop_assert!(sr.value <= sr_max(&mu, &sigma).unwrap() * (1.0 + 1e-10));
            prop_assert!((sr.value - sr.numerator / sr.denominator).abs() <= 1e-12 * sr.value.abs().max(1.0));
        }

        #[test]
        fn sandwich_identity(seed in 0u64..2000, q in 0.01f64..5.0) {
            // mu' M Sigma_hat M mu = mu' M mu - mu' M Q M mu.
            let panel = random_panel(seed, 6, 9);
            let mu = DVector::from_fn(9, |i, _| (i as f64).sin());
            let m = compute_sample_moments(&panel, Some(&mu), 0.0).unwrap();
            let reg = Regularizer::scaled(&random_spd(seed, 9), q, "B").unwrap();
            let res = reg.resolvent(&m.sigma_hat).unwrap();
            let b = res.apply(&mu);
            let lhs = quad_form(&m.sigma_hat, &b);
            let rhs = mu.dot(&b) - quad_form(reg.matrix(), &b);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * mu.dot(&b).abs().max(1e-12));
        }

        #[test]
        fn estimate_is_numerator_over_denominator(seed in 0u64..2000, q in 0.01f64..5.0) {
            let panel = random_panel(seed, 10, 7);
            let mu = DVector::from_fn(7, |i, _| 0.1 * i as f64 - 0.2);
            let m = compute_sample_moments(&panel, Some(&mu), 0.0).unwrap();
            let est = sr_hat_known_mu(&mu, &m, &Regularizer::identity(7, q).unwrap()).unwrap();
            prop_assert!(est.correction > 0.0 && est.correction <= 1.0);
            prop_assert!((est.value - est.numerator / est.denominator).abs() <= 1e-12 * est.value.abs().max(1.0));
        }
    }
}
