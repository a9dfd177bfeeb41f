//! Simulation and estimation toolkit for a subordinated Brownian motion observed
//! under additive microstructure noise.
//!
//! The crate covers the full pipeline:
//!
//! * [`sim`]: Variance Gamma / Normal Inverse Gaussian paths with white noise;
//! * [`variations`]: sparse subgrids and realized power variations;
//! * [`estimators`]: moment estimators and two-scale estimators of the
//!   volatility `sigma^2` and the kurtosis parameter `kappa`;
//! * [`tuning`]: optimal subsampling factors and the two-stage plug-in procedures;
//! * [`mc`]: Monte Carlo tables, rate regressions and asymptotic checks;
//! * [`data_io`]: tick ingestion, calendar-time resampling and empirical reports.

pub mod data_io;
pub mod error;
pub mod estimators;
pub mod mc;
pub mod sim;
pub mod tuning;
pub mod variations;

pub use error::{Error, Result};
pub use sim::{Clock, Frequency, IncrementSeries, ModelParams, NoiseSpec, SamplingScheme, Seed};
