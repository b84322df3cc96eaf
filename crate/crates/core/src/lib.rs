//! Out-of-sample Sharpe ratio and frontier-volatility estimation for
//! ridge-regularized mean-variance portfolios in the regime where the number
//! of assets is comparable to, or larger than, the number of observations.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the simulation and backtest drivers use.

pub mod backtest;
pub mod error;
pub mod frontier;
pub mod io;
pub mod linalg;
pub mod moments;
pub mod rmt;
pub mod scalar;
pub mod selection;
pub mod sharpe;
pub mod simgen;
pub mod spectral;

pub use error::{Error, Result};
pub use linalg::pseudo_inverse;
pub use scalar::Scalar;

pub use nalgebra;

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type Panel = moments::ReturnsPanel<f64>;
pub type Moments = moments::SampleMoments<f64>;
pub type Ridge = moments::Regularizer<f64>;
pub type Weights = moments::PortfolioWeights<f64>;
pub type Sharpe = sharpe::SharpeEstimate<f64>;
pub type FixedPoints = rmt::FixedPointSolution<f64>;
pub type Plugins = rmt::PluginStatistics<f64>;
pub type Frontier = frontier::FrontierCoefficients<f64>;
