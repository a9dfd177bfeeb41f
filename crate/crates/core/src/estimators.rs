//! Point estimators of `sigma^2` and `kappa`.
//!
//! Three families live here:
//!
//! * moment estimators on the full grid (`mme_*`), which blow up or collapse
//!   under microstructure noise as the grid gets finer;
//! * two-scale estimators that average realized variations over `K` sparse
//!   subgrids, optionally bias-corrected with the full-grid variation;
//! * estimators of the noise moments used to tune `K`.
//!
//! The kappa estimators take `sigma^2` as an explicit plug-in; composing them
//! with a volatility estimate is the job of [`crate::tuning`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{IncrementSeries, SamplingScheme};
use crate::variations::{averaged_sparse_variation, power_sum, CompensatedSum};

/// Floor applied to noise moments before they enter a fractional power.
pub const MOMENT_FLOOR: f64 = 1e-30;

fn check_k(series: &IncrementSeries, k: usize, min: usize) -> Result<()> {
    let max = series.n() / 2;
    if k < min || k > max {
        return Err(Error::SubsamplingOutOfRange { k, n: series.n(), min, max });
    }
    Ok(())
}

fn check_plugin(sigma2: f64) -> Result<()> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::NonPositivePlugin(sigma2));
    }
    Ok(())
}

/// Centered sample moment `(1/n) sum (Delta_i - mean)^k`.
fn central_moment(xs: &[f64], mean: f64, k: i32) -> f64 {
    xs.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / xs.len() as f64
}

fn sample_mean(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<CompensatedSum>().value() / xs.len() as f64
}

/// `[X, X]_2 / T`.
pub fn mme_sigma2(series: &IncrementSeries) -> Result<f64> {
    Ok(power_sum(series.values(), 2) / series.t_days())
}

/// `mu_2 / delta`, with the centered second sample moment.
pub fn mme_sigma2_centered(series: &IncrementSeries) -> Result<f64> {
    let xs = series.values();
    Ok(central_moment(xs, sample_mean(xs), 2) / series.delta())
}

/// `(T/3) [X, X]_4 / [X, X]_2^2`.
pub fn mme_kappa(series: &IncrementSeries) -> Result<f64> {
    let qv = power_sum(series.values(), 2);
    if qv == 0.0 {
        return Err(Error::Degenerate("zero quadratic variation".into()));
    }
    let quartic = power_sum(series.values(), 4);
    Ok(series.t_days() / 3.0 * quartic / (qv * qv))
}

/// `(delta/3) mu_4 / mu_2^2 - delta`, with centered sample moments.
pub fn mme_kappa_centered(series: &IncrementSeries) -> Result<f64> {
    let xs = series.values();
    let mean = sample_mean(xs);
    let m2 = central_moment(xs, mean, 2);
    if m2 <= (4.0 * f64::EPSILON * mean).powi(2) {
        return Err(Error::Degenerate("zero sample variance".into()));
    }
    let m4 = central_moment(xs, mean, 4);
    let delta = series.delta();
    Ok(delta / 3.0 * m4 / (m2 * m2) - delta)
}

/// `2 mu_2^2 / (delta |mu_3|) - 1`, a lower bound on `sigma^2 / (theta^2 kappa)`.
///
/// Returns `f64::INFINITY` when the third central moment vanishes (symmetric
/// samples), using a relative threshold of `1e-12 mu_2^{3/2}`.
pub fn skewness_diagnostic(series: &IncrementSeries) -> Result<f64> {
    let xs = series.values();
    let mean = sample_mean(xs);
    let m2 = central_moment(xs, mean, 2);
    let m3 = central_moment(xs, mean, 3);
    if m3.abs() <= 1e-12 * m2.powf(1.5) {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 * m2 * m2 / (series.delta() * m3.abs()) - 1.0)
}

/// Two-scale average `(1/K) sum_i [X~, X~]_2^{G(i)} / T_{i,K}`.
pub fn tsrv_sigma2(series: &IncrementSeries, k: usize) -> Result<f64> {
    check_k(series, k, 1)?;
    averaged_sparse_variation(series, k, 2)
}

/// Bias-corrected two-scale estimator
/// `(1/(K-1)) sum_i [.]_2^{G(i)} / T_{i,K} - [.]_2 / ((K-1) T)`.
///
/// Unbiased under white noise; the value can be negative on extreme samples
/// and is returned as is.
pub fn tsrv_sigma2_unbiased(series: &IncrementSeries, k: usize) -> Result<f64> {
    check_k(series, k, 2)?;
    let km1 = (k - 1) as f64;
    let sparse = averaged_sparse_variation(series, k, 2)? * k as f64;
    let full = power_sum(series.values(), 2);
    Ok(sparse / km1 - full / (km1 * series.t_days()))
}

/// `sigma^2_{n,K} - mu_2(eps~) / (K delta)` with `mu_2(eps~) = [.]_2 / n`.
/// Its mean is `(K-1)/K sigma^2`, which is what the `K/(K-1)` factor of
/// [`tsrv_sigma2_unbiased`] undoes.
pub fn tsrv_sigma2_intermediate(series: &IncrementSeries, k: usize) -> Result<f64> {
    check_k(series, k, 1)?;
    let mu2 = power_sum(series.values(), 2) / series.n() as f64;
    Ok(averaged_sparse_variation(series, k, 2)? - mu2 / (k as f64 * series.delta()))
}

/// `(1/(3 sigma^4 K)) sum_i [X~, X~]_4^{G(i)} / T_{i,K} - K delta`.
pub fn ts_kappa(series: &IncrementSeries, k: usize, sigma2: f64) -> Result<f64> {
    check_plugin(sigma2)?;
    check_k(series, k, 1)?;
    let avg = averaged_sparse_variation(series, k, 4)?;
    Ok(avg / (3.0 * sigma2 * sigma2) - k as f64 * series.delta())
}

/// Bias-corrected kappa estimator, unbiased under white noise when the
/// plug-in equals the true `sigma^2`:
///
/// `(1/(3 s^4 (K-1))) sum_i [.]_4^{G(i)}/T_{i,K} - [.]_4/(3 s^4 (K-1) T)
///  - 2 [.]_2/(n s^2) - (K-1) delta`.
pub fn ts_kappa_unbiased(series: &IncrementSeries, k: usize, sigma2: f64) -> Result<f64> {
    check_plugin(sigma2)?;
    check_k(series, k, 2)?;
    let km1 = (k - 1) as f64;
    let s4 = sigma2 * sigma2;
    let xs = series.values();
    let sparse = averaged_sparse_variation(series, k, 4)? * k as f64;
    let full4 = power_sum(xs, 4);
    let full2 = power_sum(xs, 2);
    let n = series.n() as f64;
    Ok(sparse / (3.0 * s4 * km1) - full4 / (3.0 * s4 * km1 * series.t_days())
        - 2.0 * full2 / (n * sigma2)
        - km1 * series.delta())
}

/// Asymptotically unbiased variant
/// `kappa_{n,K} - (2/s^2) mu_2(eps~) - mu_4(eps~) / (3 s^4 K delta)`,
/// with `mu_l(eps~) = [.]_l / n`.
pub fn ts_kappa_asymptotic(series: &IncrementSeries, k: usize, sigma2: f64) -> Result<f64> {
    let base = ts_kappa(series, k, sigma2)?;
    let n = series.n() as f64;
    let mu2 = power_sum(series.values(), 2) / n;
    let mu4 = power_sum(series.values(), 4) / n;
    Ok(base - 2.0 * mu2 / sigma2 - mu4 / (3.0 * sigma2 * sigma2 * k as f64 * series.delta()))
}

/// Estimated moments of the microstructure noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseMoments {
    /// `E eps^2`, estimated by `[.]_2 / (2n)`.
    pub m2_eps: f64,
    /// `E eps^4`, estimated by `[.]_4 / (2n) - 3 m2_eps^2`. Not clamped.
    pub m4_eps: f64,
    /// `E (eps_2 - eps_1)^4`, estimated by `[.]_4 / n`.
    pub m4_diff: f64,
    /// `E (eps_2 - eps_1)^8`, estimated by `[.]_8 / n`.
    pub m8_diff: f64,
    /// `Var((eps_2 - eps_1)^4)`, `max(m8_diff - m4_diff^2, MOMENT_FLOOR)`.
    pub e_eps: f64,
}

impl NoiseMoments {
    /// `m4_eps` floored for use inside fractional powers.
    pub fn m4_eps_floored(&self) -> f64 {
        self.m4_eps.max(MOMENT_FLOOR)
    }
}

pub fn estimate_noise_moments(series: &IncrementSeries) -> Result<NoiseMoments> {
    let n = series.n();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let xs = series.values();
    let nf = n as f64;
    let m2_eps = power_sum(xs, 2) / (2.0 * nf);
    let q4 = power_sum(xs, 4);
    let m4_diff = q4 / nf;
    let m8_diff = power_sum(xs, 8) / nf;
    Ok(NoiseMoments {
        m2_eps,
        m4_eps: q4 / (2.0 * nf) - 3.0 * m2_eps * m2_eps,
        m4_diff,
        m8_diff,
        e_eps: (m8_diff - m4_diff * m4_diff).max(MOMENT_FLOOR),
    })
}

/// Named estimators, including every stage of the plug-in procedures and the
/// oracle variants whose `K` uses the true model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorId {
    MmeSigma,
    MmeKappa,
    Sigma1Prime,
    Sigma1,
    Sigma2Prime,
    Sigma2,
    Sigma3Prime,
    Sigma3,
    Kappa1,
    Kappa2,
    Kappa3,
    OracleSigmaK2,
    OracleKappaK4,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 13] = [
        EstimatorId::MmeSigma,
        EstimatorId::MmeKappa,
        EstimatorId::Sigma1Prime,
        EstimatorId::Sigma1,
        EstimatorId::Sigma2Prime,
        EstimatorId::Sigma2,
        EstimatorId::Sigma3Prime,
        EstimatorId::Sigma3,
        EstimatorId::Kappa1,
        EstimatorId::Kappa2,
        EstimatorId::Kappa3,
        EstimatorId::OracleSigmaK2,
        EstimatorId::OracleKappaK4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorId::MmeSigma => "mme-sigma",
            EstimatorId::MmeKappa => "mme-kappa",
            EstimatorId::Sigma1Prime => "sigma1-prime",
            EstimatorId::Sigma1 => "sigma1",
            EstimatorId::Sigma2Prime => "sigma2-prime",
            EstimatorId::Sigma2 => "sigma2",
            EstimatorId::Sigma3Prime => "sigma3-prime",
            EstimatorId::Sigma3 => "sigma3",
            EstimatorId::Kappa1 => "kappa1",
            EstimatorId::Kappa2 => "kappa2",
            EstimatorId::Kappa3 => "kappa3",
            EstimatorId::OracleSigmaK2 => "oracle-sigma-k2",
            EstimatorId::OracleKappaK4 => "oracle-kappa-k4",
        }
    }

    /// Whether the estimator targets `sigma` (reported as a volatility, not a variance).
    pub fn targets_sigma(self) -> bool {
        matches!(
            self,
            EstimatorId::MmeSigma
                | EstimatorId::Sigma1Prime
                | EstimatorId::Sigma1
                | EstimatorId::Sigma2Prime
                | EstimatorId::Sigma2
                | EstimatorId::Sigma3Prime
                | EstimatorId::Sigma3
                | EstimatorId::OracleSigmaK2
        )
    }

    /// Oracle estimators need the true parameters and only run inside Monte Carlo.
    pub fn is_oracle(self) -> bool {
        matches!(self, EstimatorId::OracleSigmaK2 | EstimatorId::OracleKappaK4)
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .iter()
            .copied()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::UnknownEstimator(s.to_string()))
    }
}

/// A point estimate together with the inputs that produced it.
///
/// `value` is a volatility (`sigma`) for sigma estimators and `kappa` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator_id: EstimatorId,
    pub value: f64,
    #[serde(rename = "K_used")]
    pub k_used: usize,
    pub sigma_plugin: Option<f64>,
    pub noise_moments: NoiseMoments,
    pub scheme: SamplingScheme,
}
