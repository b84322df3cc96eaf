//! Floating-point scalar abstraction shared by the numeric modules.

use nalgebra::{DMatrix, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by every estimator in the crate (`f32` or `f64`).
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Converts an `f64` literal, panicking only if the type cannot represent
    /// finite doubles at all.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("scalar type must represent f64 literals")
    }

    /// Converts a count or dimension.
    fn from_count(count: usize) -> Self {
        Self::from_usize(count).expect("scalar type must represent counts")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }

    /// Eigenvalues and eigenvectors of a symmetric matrix, in no particular order.
    /// Only the lower triangle is read.
    fn symmetric_eigen(m: &DMatrix<Self>) -> (Vec<Self>, DMatrix<Self>) {
        let eig = m.clone().symmetric_eigen();
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    }

    fn symmetric_eigenvalues(m: &DMatrix<Self>) -> Vec<Self> {
        m.symmetric_eigenvalues().iter().copied().collect()
    }
}

// faer's blocked tridiagonalization is several times faster than nalgebra's
// on the sizes the Monte Carlo harness decomposes.
macro_rules! faer_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn symmetric_eigen(m: &DMatrix<Self>) -> (Vec<Self>, DMatrix<Self>) {
                let n = m.nrows();
                let fm = faer::Mat::<$t>::from_fn(n, n, |i, j| m[(i, j)]);
                match fm.self_adjoint_eigen(faer::Side::Lower) {
                    Ok(eig) => {
                        let values = (0..n).map(|i| eig.S()[i]).collect();
                        let u = eig.U();
                        (values, DMatrix::from_fn(n, n, |i, j| u[(i, j)]))
                    }
                    Err(_) => {
                        let eig = m.clone().symmetric_eigen();
                        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
                    }
                }
            }

            fn symmetric_eigenvalues(m: &DMatrix<Self>) -> Vec<Self> {
                let n = m.nrows();
                let fm = faer::Mat::<$t>::from_fn(n, n, |i, j| m[(i, j)]);
                match fm.self_adjoint_eigenvalues(faer::Side::Lower) {
                    Ok(values) => values,
                    Err(_) => m.symmetric_eigenvalues().iter().copied().collect(),
                }
            }
        }
    };
}

faer_scalar!(f32);
faer_scalar!(f64);
