//! Dense symmetric linear algebra used across the estimators.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{dims, Error, Result};
use crate::scalar::Scalar;

/// Relative eigenvalue floor below which a symmetric system is treated as
/// singular and inverted on its range only.
pub const SINGULAR_RTOL: f64 = 1e-10;

/// Relative tolerance for symmetry and PSD checks on user-supplied matrices.
pub const SYMMETRY_RTOL: f64 = 1e-9;

pub fn max_abs<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}

pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub fn is_square<T: Scalar>(m: &DMatrix<T>) -> bool {
    m.nrows() == m.ncols()
}

pub fn is_diagonal<T: Scalar>(m: &DMatrix<T>) -> bool {
    let n = m.nrows();
    is_square(m) && (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] == T::zero()))
}

pub fn ensure_finite<T: Scalar>(m: &DMatrix<T>, context: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite_value()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

pub fn ensure_finite_vec<T: Scalar>(v: &DVector<T>, context: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite_value()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in ascending order.
pub fn sym_eigen<T: Scalar>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let (raw, raw_vectors) = T::symmetric_eigen(&symmetrize(m));
    let n = raw.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw[a].partial_cmp(&raw[b]).unwrap_or(std::cmp::Ordering::Equal));
    if order.iter().enumerate().all(|(k, &i)| k == i) {
        return (DVector::from_vec(raw), raw_vectors);
    }
    let values = DVector::from_iterator(n, order.iter().map(|&i| raw[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &raw_vectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    let mut values = T::symmetric_eigenvalues(&symmetrize(m));
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    values
}

/// Checks symmetry and positive semi-definiteness up to a relative tolerance.
pub fn check_psd<T: Scalar>(m: &DMatrix<T>, context: &'static str) -> Result<()> {
    if !is_square(m) {
        return Err(dims(context, "square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    ensure_finite(m, context)?;
    let scale = max_abs(m).max(T::one());
    let tol = T::lit(SYMMETRY_RTOL) * scale;
    let asym = max_abs(&(m - m.transpose()));
    if asym > tol {
        return Err(Error::NotPsd(format!("{context} is not symmetric (max asymmetry {asym})")));
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    if is_diagonal(m) {
        let min = m.diagonal().min();
        if min < -tol {
            return Err(Error::NotPsd(format!("{context} has diagonal entry {min}")));
        }
        return Ok(());
    }
    let values = sym_eigenvalues(m);
    let min = values[0];
    if min < -tol {
        return Err(Error::NotPsd(format!("{context} has eigenvalue {min}")));
    }
    Ok(())
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix. Eigenvalues below
/// `rtol * lambda_max` are treated as zero. Returns the inverse and its rank.
pub fn pseudo_inverse<T: Scalar>(m: &DMatrix<T>, rtol: Option<T>) -> (DMatrix<T>, usize) {
    let (values, vectors) = sym_eigen(m);
    pseudo_inverse_from_eigen(&values, &vectors, rtol.unwrap_or(T::lit(SINGULAR_RTOL)))
}

fn pseudo_inverse_from_eigen<T: Scalar>(
    values: &DVector<T>,
    vectors: &DMatrix<T>,
    rtol: T,
) -> (DMatrix<T>, usize) {
    let n = values.len();
    let lmax = values.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()));
    let cutoff = rtol * lmax;
    let mut scaled = vectors.clone();
    let mut rank = 0;
    for j in 0..n {
        let inv = if values[j] > cutoff && values[j] > T::zero() {
            rank += 1;
            T::one() / values[j]
        } else {
            T::zero()
        };
        scaled.column_mut(j).scale_mut(inv);
    }
    (symmetrize(&(scaled * vectors.transpose())), rank)
}

/// Symmetric square root of a PSD matrix; tiny negative eigenvalues are clipped.
pub fn sqrt_psd<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let (values, vectors) = sym_eigen(m);
    let mut scaled = vectors.clone();
    for j in 0..values.len() {
        scaled.column_mut(j).scale_mut(values[j].max(T::zero()).sqrt());
    }
    symmetrize(&(scaled * vectors.transpose()))
}

/// Symmetric inverse square root of a positive definite matrix.
pub fn inv_sqrt_pd<T: Scalar>(m: &DMatrix<T>, context: &'static str) -> Result<DMatrix<T>> {
    let (values, vectors) = sym_eigen(m);
    let lmax = values.iter().fold(T::zero(), |acc, &v| acc.max(v));
    if values.is_empty() || values[0] <= T::lit(SINGULAR_RTOL) * lmax {
        return Err(Error::Singular(format!("{context} is not positive definite")));
    }
    let mut scaled = vectors.clone();
    for j in 0..values.len() {
        scaled.column_mut(j).scale_mut(T::one() / values[j].sqrt());
    }
    Ok(symmetrize(&(scaled * vectors.transpose())))
}

/// Eigenvalues of `B^{-1/2} A B^{-1/2}` for symmetric `A` and positive definite `B`,
/// ascending. Computed through the Cholesky factor of `B`.
pub fn relative_eigenvalues<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<Vec<T>> {
    if a.shape() != b.shape() {
        return Err(dims("relative_eigenvalues", format!("{:?}", b.shape()), format!("{:?}", a.shape())));
    }
    let chol = Cholesky::new(symmetrize(b))
        .ok_or_else(|| Error::Singular("reference matrix is not positive definite".into()))?;
    let l = chol.l();
    let left = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let whitened = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    Ok(sym_eigenvalues(&whitened))
}

/// Inverse (or pseudo-inverse) of `sigma_hat + q`, materialized once so that
/// traces and quadratic forms can reuse it.
#[derive(Debug, Clone)]
pub struct Resolvent<T: Scalar> {
    inverse: DMatrix<T>,
    pseudo: bool,
    rank: usize,
}

impl<T: Scalar> Resolvent<T> {
    /// Cholesky inverse of `sigma_hat + q`. When the system is singular
    /// (smallest eigenvalue below `SINGULAR_RTOL * lambda_max`) the range-space
    /// pseudo-inverse is used if `allow_pseudo`, otherwise an error is returned.
    /// `q_is_zero` skips the Cholesky attempt, since rank deficiency is then
    /// governed by the sample size alone.
    pub fn new(sigma_hat: &DMatrix<T>, q: &DMatrix<T>, q_is_zero: bool, allow_pseudo: bool) -> Result<Self> {
        if sigma_hat.shape() != q.shape() {
            return Err(dims("resolvent", format!("{:?}", sigma_hat.shape()), format!("{:?}", q.shape())));
        }
        let p = sigma_hat.nrows();
        let system = symmetrize(&(sigma_hat + q));
        if !q_is_zero {
            if let Some(chol) = Cholesky::new(system.clone()) {
                return Ok(Self { inverse: symmetrize(&chol.inverse()), pseudo: false, rank: p });
            }
        }
        let (values, vectors) = sym_eigen(&system);
        let lmax = values.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()));
        let singular = p == 0 || values[0] < T::lit(SINGULAR_RTOL) * lmax || lmax == T::zero();
        if singular && !allow_pseudo {
            return Err(Error::Singular(
                "sample covariance plus regularizer is singular and the pseudo-inverse was not allowed".into(),
            ));
        }
        let (inverse, rank) = pseudo_inverse_from_eigen(&values, &vectors, T::lit(SINGULAR_RTOL));
        Ok(Self { inverse, pseudo: singular, rank })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.inverse
    }

    pub fn is_pseudo(&self) -> bool {
        self.pseudo
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn apply(&self, v: &DVector<T>) -> DVector<T> {
        &self.inverse * v
    }

    /// `v' M v`.
    pub fn quad(&self, v: &DVector<T>) -> T {
        v.dot(&self.apply(v))
    }
}

/// `tr(A B)` without forming the product.
pub fn trace_product<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.component_mul(&b.transpose()).sum()
}

/// `x' A x`.
pub fn quad_form<T: Scalar>(a: &DMatrix<T>, x: &DVector<T>) -> T {
    x.dot(&(a * x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spd() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0])
    }

    #[test]
    fn sqrt_squares_back() {
        let m = spd();
        let r = sqrt_psd(&m);
        assert_relative_eq!(&r * &r, m, epsilon = 1e-12);
        let ir = inv_sqrt_pd(&m, "m").unwrap();
        assert_relative_eq!(&ir * &m * &ir, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn pseudo_inverse_of_rank_one() {
        let v = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let m = &v * v.transpose();
        let (pinv, rank) = pseudo_inverse(&m, None);
        assert_eq!(rank, 1);
        // Moore-Penrose identities.
        assert_relative_eq!(&m * &pinv * &m, m, epsilon = 1e-12);
        assert_relative_eq!(&pinv * &m * &pinv, pinv, epsilon = 1e-12);
        // For v v', the pseudo-inverse is v v' / |v|^4.
        assert_relative_eq!(pinv, &m / 81.0, epsilon = 1e-12);
    }

    #[test]
    fn resolvent_routes() {
        let m = spd();
        let zero = DMatrix::zeros(3, 3);
        let r = Resolvent::new(&m, &zero, true, false).unwrap();
        assert!(!r.is_pseudo());
        assert_relative_eq!(r.matrix() * &m, DMatrix::identity(3, 3), epsilon = 1e-12);

        let v = DVector::from_vec(vec![1.0, -1.0, 0.0]);
        let singular = &v * v.transpose();
        assert!(Resolvent::new(&singular, &zero, true, false).is_err());
        let r = Resolvent::new(&singular, &zero, true, true).unwrap();
        assert!(r.is_pseudo());
        assert_eq!(r.rank(), 1);
    }

    #[test]
    fn relative_eigenvalues_of_scaled_pair() {
        let m = spd();
        let vals = relative_eigenvalues(&(&m * 2.5), &m).unwrap();
        for v in vals {
            assert_relative_eq!(v, 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn psd_check_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(check_psd(&m, "m").is_err());
        assert!(check_psd(&spd(), "m").is_ok());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(check_psd(&asym, "m").is_err());
    }

    #[test]
    fn trace_product_matches_dense() {
        let a = spd();
        let b = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        assert_relative_eq!(trace_product(&a, &b), (&a * &b).trace(), epsilon = 1e-12);
    }
}
