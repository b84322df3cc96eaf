use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{dims, Result};
use crate::linalg::{check_psd, sqrt_psd};
use crate::moments::ReturnsPanel;

/// Independent ChaCha stream `stream` under key `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `R = 1 mu' + Z Sigma^{1/2}` with i.i.d. standard normal `Z`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mu: DVector<f64>,
    root: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != mu.len() {
            return Err(dims("sampler covariance", mu.len(), sigma.nrows()));
        }
        check_psd(sigma, "sampler covariance")?;
        Ok(Self { mu: mu.clone(), root: sqrt_psd(sigma) })
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }

    /// Normals are consumed row by row.
    pub fn noise<R: Rng>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let p = self.p();
        let z: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
        DMatrix::from_row_slice(n, p, &z) * &self.root
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let mut r = self.noise(n, rng);
        for mut row in r.row_iter_mut() {
            row += self.mu.transpose();
        }
        r
    }
}

/// One Gaussian panel from stream 0 of `seed`.
pub fn sample_returns(mu: &DVector<f64>, sigma: &DMatrix<f64>, n: usize, seed: u64) -> Result<ReturnsPanel<f64>> {
    let sampler = GaussianSampler::new(mu, sigma)?;
    ReturnsPanel::from_matrix(sampler.sample(n, &mut rng_stream(seed, 0)))
}
