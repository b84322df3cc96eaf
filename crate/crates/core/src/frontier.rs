//! Regularized mean-variance frontier and its out-of-sample variance estimate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::linalg::{check_psd, quad_form};
use crate::moments::{check_dims, Regularizer, SampleMoments};
use crate::rmt::RelativeSpectrum;
use crate::scalar::Scalar;
use crate::sharpe::{check_correction, correction_factor};

/// `D <= FRONTIER_RTOL * B * C` means the expected returns are (numerically)
/// proportional to the unit vector and no frontier exists.
pub const FRONTIER_RTOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FrontierCoefficients<T: Scalar> {
    /// `r' M 1`.
    pub a: T,
    /// `r' M r`.
    pub b: T,
    /// `1' M 1`.
    pub c: T,
    /// `B C - A^2`.
    pub d: T,
    pub g: DVector<T>,
    pub h: DVector<T>,
    /// `1 - (c/p) tr(Sigma_hat M)` for the same regularizer.
    pub correction: T,
}

#[derive(Debug, Clone)]
pub struct FrontierPoint<T: Scalar> {
    pub mu0: T,
    pub weights: DVector<T>,
    /// Estimated out-of-sample variance `w' Sigma_hat w / correction^2`.
    pub sigma_hat_sq: T,
    /// `w' Sigma w` when the population covariance is supplied.
    pub sigma_true_sq: Option<T>,
}

impl<T: Scalar> FrontierPoint<T> {
    pub fn sigma_hat(&self) -> T {
        self.sigma_hat_sq.max(T::zero()).sqrt()
    }

    pub fn sigma_true(&self) -> Option<T> {
        self.sigma_true_sq.map(|v| v.max(T::zero()).sqrt())
    }
}

pub fn frontier_coefficients<T: Scalar>(
    r: &DVector<T>,
    moments: &SampleMoments<T>,
    reg: &Regularizer<T>,
) -> Result<FrontierCoefficients<T>> {
    check_dims(moments, reg)?;
    if r.len() != moments.p {
        return Err(dims("expected returns", moments.p, r.len()));
    }
    crate::linalg::ensure_finite_vec(r, "expected returns")?;
    let resolvent = reg.resolvent(&moments.sigma_hat)?;
    let ones = DVector::from_element(moments.p, T::one());
    let m1 = resolvent.apply(&ones);
    let mr = resolvent.apply(r);
    let a = r.dot(&m1);
    let b = r.dot(&mr);
    let c = ones.dot(&m1);
    let d = b * c - a * a;
    if !(d > T::lit(FRONTIER_RTOL) * (b * c).abs()) {
        return Err(Error::Degenerate(
            "expected returns are collinear with the unit vector; frontier is undefined".into(),
        ));
    }
    let g = (&m1 * b - &mr * a) / d;
    let h = (&mr * c - &m1 * a) / d;
    let correction = correction_factor(moments, &resolvent);
    Ok(FrontierCoefficients { a, b, c, d, g, h, correction })
}

/// Frontier portfolio `g + mu0 h` with its estimated out-of-sample variance.
pub fn frontier_point<T: Scalar>(
    coeffs: &FrontierCoefficients<T>,
    mu0: T,
    moments: &SampleMoments<T>,
    sigma_true: Option<&DMatrix<T>>,
) -> Result<FrontierPoint<T>> {
    if !mu0.is_finite_value() {
        return Err(Error::NonFinite("target return"));
    }
    if coeffs.g.len() != moments.p {
        return Err(dims("frontier coefficients", moments.p, coeffs.g.len()));
    }
    check_correction(coeffs.correction)?;
    let weights = &coeffs.g + &coeffs.h * mu0;
    let corr2 = coeffs.correction * coeffs.correction;
    let sigma_hat_sq = quad_form(&moments.sigma_hat, &weights) / corr2;
    let sigma_true_sq = match sigma_true {
        Some(s) => {
            if s.shape() != (moments.p, moments.p) {
                return Err(dims("population covariance", moments.p, s.nrows()));
            }
            Some(quad_form(s, &weights))
        }
        None => None,
    };
    Ok(FrontierPoint { mu0, weights, sigma_hat_sq, sigma_true_sq })
}

/// Quantities governing the frontier limit, built from
/// `M' = (Sigma / (1 + s0) + Q)^{-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionDiagnostics<T> {
    pub a_rr: T,
    pub a_r1: T,
    pub a_11: T,
    /// `a_r1^2 / (a_rr a_11)`; the limit theory needs this bounded away from one.
    pub rho: T,
    pub s0: T,
}

pub fn assumption_diagnostics<T: Scalar>(
    r: &DVector<T>,
    sigma: &DMatrix<T>,
    reg: &Regularizer<T>,
    c: T,
) -> Result<AssumptionDiagnostics<T>> {
    let p = sigma.nrows();
    if r.len() != p {
        return Err(dims("expected returns", p, r.len()));
    }
    check_psd(sigma, "population covariance")?;
    let s0 = RelativeSpectrum::new(sigma, reg, c)?.solve_s0()?.value;
    let system = sigma / (T::one() + s0) + reg.matrix();
    let m = crate::linalg::Resolvent::new(&system, &DMatrix::zeros(p, p), false, false)?;
    let ones = DVector::from_element(p, T::one());
    let a_rr = m.quad(r);
    let a_11 = m.quad(&ones);
    let a_r1 = r.dot(&m.apply(&ones));
    let denom = a_rr * a_11;
    if denom <= T::zero() {
        return Err(Error::Degenerate("expected returns are zero".into()));
    }
    Ok(AssumptionDiagnostics { a_rr, a_r1, a_11, rho: a_r1 * a_r1 / denom, s0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{compute_sample_moments, ReturnsPanel};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn moments(seed: u64, n: usize, p: usize) -> SampleMoments<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let panel = ReturnsPanel::from_matrix(DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        compute_sample_moments(&panel, None, 0.0).unwrap()
    }

    #[test]
    fn collinear_returns_are_rejected() {
        let m = moments(1, 20, 5);
        let reg = Regularizer::identity(5, 0.5).unwrap();
        let r = DVector::from_element(5, 0.3);
        assert!(matches!(frontier_coefficients(&r, &m, &reg), Err(Error::Degenerate(_))));
    }

    #[test]
    fn unregularized_limit_ratio_is_recovered_by_correction() {
        // With Q = 0 the correction is exactly 1 - p/n.
        let m = moments(2, 50, 10);
        let r = DVector::from_fn(10, |i, _| i as f64 * 0.01);
        let coeffs = frontier_coefficients(&r, &m, &Regularizer::zero(10)).unwrap();
        assert_relative_eq!(coeffs.correction, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn diagnostics_in_range() {
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let r = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.05]);
        let d = assumption_diagnostics(&r, &sigma, &Regularizer::identity(4, 1.0).unwrap(), 0.5).unwrap();
        assert!(d.rho >= 0.0 && d.rho < 1.0);
        assert!(d.s0 > 0.0);
    }

    proptest! {
        #[test]
        fn frontier_constraints_hold(seed in 0u64..2000, q in 0.01f64..3.0, mu0 in -2.0f64..2.0) {
            let m = moments(seed, 9, 6);
            let r = DVector::from_fn(6, |i, _| ((seed as usize + 3 * i) % 11) as f64 / 10.0 - 0.5);
            let reg = Regularizer::identity(6, q).unwrap();
            let coeffs = match frontier_coefficients(&r, &m, &reg) {
                Ok(c) => c,
                Err(_) => return Ok(()),
            };
            prop_assert!(coeffs.d >= 0.0);
            let pt = frontier_point(&coeffs, mu0, &m, None).unwrap();
            prop_assert!((pt.weights.sum() - 1.0).abs() < 1e-10);
            prop_assert!((pt.weights.dot(&r) - mu0).abs() < 1e-10 * (1.0 + mu0.abs()));
            prop_assert!(pt.sigma_hat_sq >= 0.0);
        }
    }
}
