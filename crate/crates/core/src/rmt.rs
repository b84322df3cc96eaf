//! Deterministic-equivalent fixed points for ridge-regularized sample covariances.
//!
//! The oracle path needs the population covariance; the plug-in path uses only
//! traces of the sample resolvent.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::linalg::{check_psd, relative_eigenvalues, trace_product, SINGULAR_RTOL};
use crate::moments::{check_dims, Regularizer, SampleMoments};
use crate::scalar::Scalar;

pub const S0_TOL: f64 = 1e-12;
pub const S0_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointSource {
    Oracle,
    Plugin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution<T> {
    pub s0: T,
    pub s1_sigma: T,
    pub s1_q: T,
    pub source: FixedPointSource,
    /// `|s0 - g(s0)|` for the oracle, zero for plug-ins.
    pub residual: T,
    pub iterations: usize,
    /// Whether `s0 > 0`, `-s0 (1 + s0)^2 <= s1_sigma < 0` and `-s0 <= s1_q < 0`.
    pub within_bounds: bool,
}

impl<T: Scalar> FixedPointSolution<T> {
    /// `(1 + s0 + s1_q) / ((1 + s0)^2 - s1_sigma)`, the limit of
    /// out-of-sample over in-sample frontier variance.
    pub fn variance_ratio(&self) -> T {
        let one = T::one();
        (one + self.s0 + self.s1_q) / ((one + self.s0) * (one + self.s0) - self.s1_sigma)
    }
}

fn within_bounds<T: Scalar>(s0: T, s1_sigma: T, s1_q: T) -> bool {
    let one = T::one();
    s0 > T::zero() && s1_sigma < T::zero() && s1_sigma >= -s0 * (one + s0) * (one + s0) && s1_q < T::zero() && s1_q >= -s0
}

/// Scalar root returned by [`solve_s0`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root<T> {
    pub value: T,
    pub residual: T,
    pub iterations: usize,
}

/// Generalized spectrum of the pencil `(Q, Sigma)`, computed once and reused by
/// every fixed-point equation.
#[derive(Debug, Clone)]
pub struct RelativeSpectrum<T: Scalar> {
    form: Form<T>,
    p: usize,
    c: T,
}

#[derive(Debug, Clone)]
enum Form<T> {
    /// Eigenvalues of `Sigma^{-1/2} Q Sigma^{-1/2}` (Sigma positive definite).
    QOverSigma(Vec<T>),
    /// Eigenvalues of `Q^{-1/2} Sigma Q^{-1/2}` (Q positive definite, Sigma possibly singular).
    SigmaOverQ(Vec<T>),
    /// `Q = 0`.
    Unregularized,
}

/// Clamps eigenvalues below the rank tolerance to exact zeros.
fn snap_zeros<T: Scalar>(values: Vec<T>) -> Vec<T> {
    let top = values.iter().fold(T::zero(), |acc, &x| acc.max(x));
    let floor = T::lit(SINGULAR_RTOL) * top;
    values.into_iter().map(|x| if x <= floor { T::zero() } else { x }).collect()
}

impl<T: Scalar> RelativeSpectrum<T> {
    pub fn new(sigma: &DMatrix<T>, reg: &Regularizer<T>, c: T) -> Result<Self> {
        check_psd(sigma, "population covariance")?;
        if reg.dim() != sigma.nrows() {
            return Err(dims("regularizer", sigma.nrows(), reg.dim()));
        }
        if !(c > T::zero()) || !c.is_finite_value() {
            return Err(Error::InvalidInput(format!("concentration ratio must be positive, got {c}")));
        }
        let p = sigma.nrows();
        if p == 0 {
            return Err(Error::InvalidInput("empty covariance".into()));
        }
        if sigma.trace() <= T::zero() {
            return Err(Error::Degenerate("population covariance is zero".into()));
        }
        let form = if reg.is_zero() {
            if c >= T::one() {
                return Err(Error::InvalidRegime(format!(
                    "Q = 0 requires p/n < 1, got {c}; use a positive definite regularizer"
                )));
            }
            Form::Unregularized
        } else if let Ok(u) = relative_eigenvalues(reg.matrix(), sigma) {
            Form::QOverSigma(snap_zeros(u))
        } else {
            let v = relative_eigenvalues(sigma, reg.matrix()).map_err(|_| {
                Error::Singular("need a positive definite covariance or regularizer".into())
            })?;
            Form::SigmaOverQ(snap_zeros(v))
        };
        Ok(Self { form, p, c })
    }

    fn scale(&self) -> T {
        self.c / T::from_count(self.p)
    }

    /// `(c/p) tr Sigma (Sigma/(1+s) + Q)^{-1}`.
    pub fn g(&self, s: T) -> T {
        let one = T::one();
        let t = one + s;
        let sum = match &self.form {
            Form::QOverSigma(u) => u.iter().fold(T::zero(), |acc, &ui| acc + t / (one + t * ui)),
            Form::SigmaOverQ(v) => v.iter().fold(T::zero(), |acc, &vi| acc + t * vi / (vi + t)),
            Form::Unregularized => t * T::from_count(self.p),
        };
        self.scale() * sum
    }

    /// `(c/p) sum 1 / (1 + (1+s) u_i)^2`.
    fn m(&self, s: T) -> T {
        let one = T::one();
        let t = one + s;
        let sum = match &self.form {
            Form::QOverSigma(u) => u.iter().fold(T::zero(), |acc, &ui| {
                let d = one + t * ui;
                acc + one / (d * d)
            }),
            Form::SigmaOverQ(v) => v.iter().fold(T::zero(), |acc, &vi| {
                let r = vi / (vi + t);
                acc + r * r
            }),
            Form::Unregularized => T::from_count(self.p),
        };
        self.scale() * sum
    }

    /// Upper bracket for the root: `(c/p) tr Q^{-1} Sigma` when finite.
    fn initial_upper(&self) -> Option<T> {
        match &self.form {
            Form::QOverSigma(u) => {
                if u.iter().any(|&x| x <= T::zero()) {
                    None
                } else {
                    Some(self.scale() * u.iter().fold(T::zero(), |acc, &x| acc + T::one() / x))
                }
            }
            Form::SigmaOverQ(v) => Some(self.scale() * v.iter().fold(T::zero(), |acc, &x| acc + x)),
            Form::Unregularized => None,
        }
    }

    pub fn solve_s0(&self) -> Result<Root<T>> {
        if let Form::Unregularized = self.form {
            let s0 = self.c / (T::one() - self.c);
            return Ok(Root { value: s0, residual: (self.g(s0) - s0).abs(), iterations: 0 });
        }
        let h = |s: T| self.g(s) - s;
        let mut lo = T::zero();
        if h(lo) <= T::zero() {
            return Err(Error::Degenerate("fixed-point map vanishes at zero".into()));
        }
        let mut hi = self.initial_upper().unwrap_or(T::one()).max(T::default_epsilon());
        let mut iterations = 0;
        while h(hi) > T::zero() {
            lo = hi;
            hi *= T::lit(2.0);
            iterations += 1;
            if iterations > S0_MAX_ITER || !hi.is_finite_value() {
                return Err(Error::NoConvergence(
                    "no positive root; the regularizer's null space is too large for this p/n".into(),
                ));
            }
        }
        let tol = T::lit(S0_TOL);
        while iterations < S0_MAX_ITER {
            let mid = (lo + hi) * T::lit(0.5);
            if mid <= lo || mid >= hi || hi - lo <= tol * (T::one() + lo) {
                break;
            }
            if h(mid) > T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
        }
        let value = (lo + hi) * T::lit(0.5);
        Ok(Root { value, residual: h(value).abs(), iterations })
    }

    fn m_checked(&self, s0: T) -> Result<T> {
        let m = self.m(s0);
        if m >= T::one() {
            return Err(Error::Degenerate(format!("derivative term {m} is not below one")));
        }
        Ok(m)
    }

    pub fn s1_sigma(&self, s0: T) -> Result<T> {
        let m = self.m_checked(s0)?;
        let t = T::one() + s0;
        Ok(m * t * t / (m - T::one()))
    }

    pub fn s1_q(&self, s0: T) -> Result<T> {
        let m = self.m_checked(s0)?;
        let t = T::one() + s0;
        Ok((t * m - s0) / (T::one() - m))
    }

    pub fn solve(&self) -> Result<FixedPointSolution<T>> {
        let root = self.solve_s0()?;
        let s0 = root.value;
        let s1_sigma = self.s1_sigma(s0)?;
        let s1_q = self.s1_q(s0)?;
        Ok(FixedPointSolution {
            s0,
            s1_sigma,
            s1_q,
            source: FixedPointSource::Oracle,
            residual: root.residual,
            iterations: root.iterations,
            within_bounds: within_bounds(s0, s1_sigma, s1_q),
        })
    }
}

/// Positive root of `s = (c/p) tr Sigma (Sigma/(1+s) + Q)^{-1}`.
pub fn solve_s0<T: Scalar>(sigma: &DMatrix<T>, reg: &Regularizer<T>, c: T) -> Result<Root<T>> {
    RelativeSpectrum::new(sigma, reg, c)?.solve_s0()
}

pub fn solve_s1_sigma<T: Scalar>(sigma: &DMatrix<T>, reg: &Regularizer<T>, c: T, s0: T) -> Result<T> {
    RelativeSpectrum::new(sigma, reg, c)?.s1_sigma(s0)
}

pub fn solve_s1_q<T: Scalar>(sigma: &DMatrix<T>, reg: &Regularizer<T>, c: T, s0: T) -> Result<T> {
    RelativeSpectrum::new(sigma, reg, c)?.s1_q(s0)
}

pub fn oracle_fixed_points<T: Scalar>(sigma: &DMatrix<T>, reg: &Regularizer<T>, c: T) -> Result<FixedPointSolution<T>> {
    RelativeSpectrum::new(sigma, reg, c)?.solve()
}

/// Normalized traces of the sample resolvent `M = (Sigma_hat + Q)^{-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluginStatistics<T> {
    /// `tr(Q M) / p`.
    pub f1: T,
    /// `tr(Q M Q M) / p`.
    pub f2: T,
    /// `1 - (c/p) tr(Sigma_hat M)`.
    pub correction: T,
    pub c: T,
}

pub fn plugin_stats<T: Scalar>(moments: &SampleMoments<T>, reg: &Regularizer<T>) -> Result<PluginStatistics<T>> {
    check_dims(moments, reg)?;
    let resolvent = reg.resolvent(&moments.sigma_hat)?;
    let m = resolvent.matrix();
    let p = T::from_count(moments.p);
    let c = moments.c();
    let qm = reg.matrix() * m;
    let f1 = qm.trace() / p;
    let f2 = trace_product(&qm, &qm) / p;
    let correction = T::one() - c / p * trace_product(&moments.sigma_hat, m);
    Ok(PluginStatistics { f1, f2, correction, c })
}

/// Consistent estimates of the fixed points from sample traces alone.
pub fn plugin_fixed_points<T: Scalar>(stats: &PluginStatistics<T>, c: T) -> Result<FixedPointSolution<T>> {
    let one = T::one();
    let PluginStatistics { f1, f2, .. } = *stats;
    let a = one + c * (f1 - one);
    if a.abs() <= T::default_epsilon() {
        return Err(Error::Degenerate("plug-in denominator 1 + c(f1 - 1) vanishes".into()));
    }
    let a2 = a * a;
    let s0 = c * (one - f1) / a;
    let s1_q = c * (f2 - f1) / a2;
    let s1_sigma = c * (-one + T::lit(2.0) * f1 - f2 + c * (f1 - one) * (f1 - one)) / (a2 * a2);
    let ok = within_bounds(s0, s1_sigma, s1_q);
    if !ok {
        log::warn!("plug-in fixed points outside theoretical bounds: s0={s0}, s1_sigma={s1_sigma}, s1_q={s1_q}");
    }
    Ok(FixedPointSolution {
        s0,
        s1_sigma,
        s1_q,
        source: FixedPointSource::Plugin,
        residual: T::zero(),
        iterations: 0,
        within_bounds: ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Resolvent;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn sigma4() -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0, 2.0, 4.0]));
        d + DMatrix::from_element(4, 4, 0.3)
    }

    /// Dense back-substitution of the three defining equations.
    fn dense_residuals(sigma: &DMatrix<f64>, q: &DMatrix<f64>, c: f64, s: &FixedPointSolution<f64>) -> [f64; 3] {
        let p = sigma.nrows() as f64;
        let t = 1.0 + s.s0;
        let m = Resolvent::new(&(sigma / t), q, false, false).unwrap().matrix().clone();
        let sm = sigma * &m;
        let r0 = s.s0 - c / p * sm.trace();
        let r1 = s.s1_sigma - (s.s1_sigma / (t * t) - 1.0) * c / p * trace_product(&sm, &sm);
        let inner = sigma * (s.s1_q / (t * t)) - q;
        let r2 = s.s1_q - c / p * (sigma * &m * inner * &m).trace();
        [r0, r1, r2]
    }

    #[test]
    fn proportional_regularizer_matches_quadratic_root() {
        // Q = q Sigma reduces to q s^2 + (q + 1 - c) s - c = 0.
        let sigma = sigma4();
        for (q, c) in [(1.0, 0.5), (0.3, 2.0), (4.0, 0.1)] {
            let reg = Regularizer::scaled(&sigma, q, "S").unwrap();
            let s0 = solve_s0(&sigma, &reg, c).unwrap().value;
            let b = q + 1.0 - c;
            let expected = (-b + (b * b + 4.0 * q * c).sqrt()) / (2.0 * q);
            assert_relative_eq!(s0, expected, epsilon = 1e-10);
        }
        let reg = Regularizer::scaled(&sigma, 1.0, "S").unwrap();
        assert_relative_eq!(solve_s0(&sigma, &reg, 0.5).unwrap().value, 0.28077640640441515, epsilon = 1e-10);
    }

    #[test]
    fn unregularized_closed_form() {
        let sigma = sigma4();
        let sol = oracle_fixed_points(&sigma, &Regularizer::zero(4), 0.25).unwrap();
        assert_relative_eq!(sol.s0, 1.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(sol.variance_ratio(), 0.75 * 0.75, epsilon = 1e-12);
        assert!(matches!(
            oracle_fixed_points(&sigma, &Regularizer::zero(4), 1.5),
            Err(Error::InvalidRegime(_))
        ));
    }

    #[test]
    fn oracle_solution_back_substitutes() {
        let sigma = sigma4();
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 3.0, 1.0, 1.0])) * 0.7;
        let reg = Regularizer::new(q.clone(), "Q").unwrap();
        for c in [0.2, 0.9, 1.7, 5.0] {
            let sol = oracle_fixed_points(&sigma, &reg, c).unwrap();
            assert!(sol.within_bounds, "{sol:?}");
            for r in dense_residuals(&sigma, &q, c, &sol) {
                assert!(r.abs() < 1e-10, "c={c} residual {r}");
            }
        }
    }

    #[test]
    fn singular_covariance_uses_regularizer_whitening() {
        let v = DVector::from_vec(vec![1.0, 2.0, 0.0]);
        let sigma = &v * v.transpose();
        let reg = Regularizer::identity(3, 0.5).unwrap();
        let sol = oracle_fixed_points(&sigma, &reg, 0.8).unwrap();
        for r in dense_residuals(&sigma, reg.matrix(), 0.8, &sol) {
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_regularizer_grows_bracket() {
        let sigma = sigma4();
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.0, 0.0]));
        let reg = Regularizer::new(q.clone(), "Q").unwrap();
        let sol = oracle_fixed_points(&sigma, &reg, 2.0).unwrap();
        for r in dense_residuals(&sigma, &q, 2.0, &sol) {
            assert!(r.abs() < 1e-9);
        }
        // One unregularized direction with c/p = 1.5 leaves no root.
        assert!(oracle_fixed_points(&sigma, &reg, 6.0).is_err());
    }

    #[test]
    fn plugin_identity_when_f_equal_one() {
        let stats = PluginStatistics { f1: 1.0, f2: 1.0, correction: 1.0, c: 0.5 };
        let sol = plugin_fixed_points(&stats, 0.5).unwrap();
        assert_eq!(sol.s0, 0.0);
        assert_eq!(sol.s1_sigma, 0.0);
        assert_eq!(sol.s1_q, 0.0);
        assert!(!sol.within_bounds);
    }

    fn arb_problem() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, f64)> {
        (3usize..7, 0u64..10_000, 0.05f64..4.0).prop_map(|(p, seed, c)| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
            let sigma = &a * a.transpose() + DMatrix::identity(p, p) * 0.05;
            let q = DMatrix::from_diagonal(&DVector::from_fn(p, |_, _| rng.random_range(0.05..3.0)));
            (sigma, q, c)
        })
    }

    proptest! {
        #[test]
        fn oracle_bounds_and_residuals((sigma, q, c) in arb_problem()) {
            let reg = Regularizer::new(q.clone(), "Q").unwrap();
            let sol = oracle_fixed_points(&sigma, &reg, c).unwrap();
            prop_assert!(sol.s0 > 0.0);
            prop_assert!(sol.within_bounds, "{:?}", sol);
            for r in dense_residuals(&sigma, &q, c, &sol) {
                prop_assert!(r.abs() < 1e-10 * (1.0 + sol.s0), "residual {}", r);
            }
        }

        #[test]
        fn plugin_matches_correction_squared(f1 in 0.01f64..0.99, frac in 0.0f64..1.0, c in 0.05f64..3.0) {
            // f2 ranges over [f1^2, f1].
            let f2 = f1 * f1 + frac * (f1 - f1 * f1);
            let stats = PluginStatistics { f1, f2, correction: 1.0 - c * (1.0 - f1), c };
            let a = 1.0 + c * (f1 - 1.0);
            prop_assume!(a.abs() > 1e-3);
            let sol = plugin_fixed_points(&stats, c).unwrap();
            prop_assert!((sol.variance_ratio() - a * a).abs() < 1e-9 * (1.0 + a * a));
        }
    }
}
