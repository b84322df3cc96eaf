//! Fast evaluation over a one-parameter regularizer family `Q(q) = offset + q B`.
//!
//! After one eigendecomposition of the whitened sample covariance, each grid
//! value costs a few matrix-vector products instead of a fresh factorization.
//! When there is no offset and `p > n`, the `n x n` Gram matrix is decomposed
//! instead and the null space of the sample covariance is handled in closed form.

use nalgebra::{DMatrix, DVector};

use crate::error::{dims, Error, Result};
use crate::linalg::{check_psd, inv_sqrt_pd, sym_eigen, SINGULAR_RTOL};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
enum Whitening<T: Scalar> {
    Identity,
    Diagonal(DVector<T>),
    Dense(DMatrix<T>),
}

impl<T: Scalar> Whitening<T> {
    fn for_base(base: &DMatrix<T>) -> Result<Self> {
        if crate::linalg::is_diagonal(base) {
            let d = base.diagonal();
            if d.iter().any(|&x| x <= T::zero()) {
                return Err(Error::Singular("family base must be positive definite".into()));
            }
            if d.iter().all(|&x| x == T::one()) {
                return Ok(Self::Identity);
            }
            return Ok(Self::Diagonal(d.map(|x| T::one() / x.sqrt())));
        }
        Ok(Self::Dense(inv_sqrt_pd(base, "family base")?))
    }

    fn vector(&self, v: &DVector<T>) -> DVector<T> {
        match self {
            Self::Identity => v.clone(),
            Self::Diagonal(d) => v.component_mul(d),
            Self::Dense(w) => w * v,
        }
    }

    /// `X W`.
    fn columns(&self, x: &DMatrix<T>) -> DMatrix<T> {
        match self {
            Self::Identity => x.clone(),
            Self::Diagonal(d) => {
                let mut y = x.clone();
                for (j, mut col) in y.column_iter_mut().enumerate() {
                    col *= d[j];
                }
                y
            }
            Self::Dense(w) => x * w,
        }
    }

    /// `W A W`.
    fn sandwich(&self, a: &DMatrix<T>) -> DMatrix<T> {
        match self {
            Self::Identity => a.clone(),
            Self::Diagonal(d) => DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| d[i] * a[(i, j)] * d[j]),
            Self::Dense(w) => w * a * w,
        }
    }
}

/// Whitening of a family's base and offset, shared by every sample drawn
/// against the same design.
#[derive(Debug, Clone)]
pub struct FamilyBase<T: Scalar> {
    whitening: Whitening<T>,
    offset_w: Option<DMatrix<T>>,
    p: usize,
}

impl<T: Scalar> FamilyBase<T> {
    /// `base` must be positive definite and `offset` PSD.
    pub fn new(base: &DMatrix<T>, offset: Option<&DMatrix<T>>) -> Result<Self> {
        let p = base.nrows();
        if base.ncols() != p {
            return Err(dims("family base", p, base.ncols()));
        }
        check_psd(base, "family base")?;
        let whitening = Whitening::for_base(base)?;
        let offset_w = match offset {
            Some(o) => {
                if o.shape() != (p, p) {
                    return Err(dims("family offset", p, o.nrows()));
                }
                check_psd(o, "family offset")?;
                Some(whitening.sandwich(o))
            }
            None => None,
        };
        Ok(Self { whitening, offset_w, p })
    }

    pub fn p(&self) -> usize {
        self.p
    }
}

/// Spectral representation of `Sigma_hat + offset + q B` for all `q`, with
/// `Sigma_hat = X'X / n`.
#[derive(Debug, Clone)]
pub struct ScaledFamily<T: Scalar> {
    whitening: Whitening<T>,
    values: DVector<T>,
    vectors: DMatrix<T>,
    /// Whether `vectors` spans the whole space.
    complete: bool,
    /// `diag(V' W offset W V)`.
    offset_diag: Option<DVector<T>>,
    centered: DMatrix<T>,
    n: usize,
    p: usize,
}

impl<T: Scalar> ScaledFamily<T> {
    /// `centered` is the `n x p` data matrix `X`; `base` must be positive
    /// definite and `offset` PSD.
    pub fn new(centered: &DMatrix<T>, base: &DMatrix<T>, offset: Option<&DMatrix<T>>) -> Result<Self> {
        Self::with_base(centered, &FamilyBase::new(base, offset)?)
    }

    pub fn with_base(centered: &DMatrix<T>, family: &FamilyBase<T>) -> Result<Self> {
        let (n, p) = centered.shape();
        if family.p != p {
            return Err(dims("family base", p, family.p));
        }
        let whitening = family.whitening.clone();
        let y = whitening.columns(centered);
        let nn = T::from_count(n);
        let offset_w = family.offset_w.as_ref();

        if offset_w.is_none() && p > n {
            let gram = &y * y.transpose() / nn;
            let (vals, u) = sym_eigen(&gram);
            let lmax = vals.iter().fold(T::zero(), |acc, &v| acc.max(v));
            let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > T::lit(SINGULAR_RTOL) * lmax).collect();
            let mut u_r = DMatrix::zeros(n, keep.len());
            for (k, &i) in keep.iter().enumerate() {
                let scale = T::one() / (vals[i] * nn).sqrt();
                u_r.set_column(k, &(u.column(i) * scale));
            }
            let values = DVector::from_iterator(keep.len(), keep.iter().map(|&i| vals[i]));
            let vectors = y.transpose() * &u_r;
            return Ok(Self {
                whitening,
                values,
                vectors,
                complete: false,
                offset_diag: None,
                centered: centered.clone(),
                n,
                p,
            });
        }

        let mut s = y.transpose() * &y / nn;
        if let Some(o) = offset_w {
            s += o;
        }
        let (values, vectors) = sym_eigen(&s);
        let values = values.map(|v| v.max(T::zero()));
        let offset_diag = offset_w.map(|o| {
            let ov = o * &vectors;
            DVector::from_fn(p, |i, _| vectors.column(i).dot(&ov.column(i)))
        });
        Ok(Self { whitening, values, vectors, complete: true, offset_diag, centered: centered.clone(), n, p })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check_q(&self, q: T) -> Result<()> {
        let singular = !self.complete || self.values.iter().any(|&v| v <= T::zero());
        if q < T::zero() || (q == T::zero() && singular) || !q.is_finite_value() {
            return Err(Error::Singular(format!("family member q = {q} is not invertible")));
        }
        Ok(())
    }

    /// `(Sigma_hat + offset + q B)^{-1} v`.
    pub fn solve(&self, q: T, v: &DVector<T>) -> Result<DVector<T>> {
        if v.len() != self.p {
            return Err(dims("family solve", self.p, v.len()));
        }
        self.check_q(q)?;
        let u = self.whitening.vector(v);
        let a = self.vectors.tr_mul(&u);
        let coeff = DVector::from_fn(a.len(), |i, _| a[i] / (self.values[i] + q));
        let mut b = &self.vectors * coeff;
        if !self.complete {
            let residual = &u - &self.vectors * &a;
            b += residual / q;
        }
        Ok(self.whitening.vector(&b))
    }

    /// `tr(Sigma_hat (Sigma_hat + offset + q B)^{-1})`.
    pub fn trace_sigma_hat(&self, q: T) -> Result<T> {
        self.check_q(q)?;
        let mut total = T::zero();
        for i in 0..self.values.len() {
            let num = match &self.offset_diag {
                Some(d) => self.values[i] - d[i],
                None => self.values[i],
            };
            total += num / (self.values[i] + q);
        }
        Ok(total)
    }

    /// `1 - (c/p) tr(Sigma_hat M(q))`.
    pub fn correction(&self, q: T) -> Result<T> {
        let c = T::from_count(self.p) / T::from_count(self.n);
        Ok(T::one() - c / T::from_count(self.p) * self.trace_sigma_hat(q)?)
    }

    /// `(f1, f2)` traces; only available without an offset.
    pub fn f_stats(&self, q: T) -> Result<(T, T)> {
        if self.offset_diag.is_some() {
            return Err(Error::InvalidInput("trace statistics need a family without offset".into()));
        }
        self.check_q(q)?;
        let null = T::from_count(self.p - self.values.len());
        let (mut f1, mut f2) = (null, null);
        for &l in self.values.iter() {
            let r = q / (l + q);
            f1 += r;
            f2 += r * r;
        }
        let p = T::from_count(self.p);
        Ok((f1 / p, f2 / p))
    }

    /// `b' Sigma_hat b` computed as `|X b|^2 / n`.
    pub fn sigma_hat_quad(&self, b: &DVector<T>) -> T {
        let xb = &self.centered * b;
        xb.norm_squared() / T::from_count(self.n)
    }
}
