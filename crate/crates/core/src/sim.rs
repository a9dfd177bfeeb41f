//! Subordinated Brownian motion under additive white noise.
//!
//! The efficient log-price is `X_t = sigma * W(tau_t) + theta * tau_t + b * t`
//! where `tau` is an independent subordinator normalised so that
//! `E tau_t = t` and `Var tau_t = kappa * t`. Two clocks are supported:
//!
//! * [`Clock::Gamma`]: `tau_t ~ Gamma(shape = t / kappa, scale = kappa)`, giving
//!   the Variance Gamma process;
//! * [`Clock::InverseGaussian`]: `tau_t ~ IG(mean = t, shape = t^2 / kappa)`,
//!   giving the Normal Inverse Gaussian process.
//!
//! Observations are `X~_t = X_t + eps_t` with `eps` i.i.d. `N(0, rho^2)` attached
//! to the observation times, so consecutive noisy increments share a noise value
//! and form an MA(1) sequence.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of a trading day in seconds (6.5 hours).
pub const DEFAULT_DAY_SECONDS: f64 = 23_400.0;

/// Subordinator family driving the business-time clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    /// Gamma subordinator (Variance Gamma model).
    #[serde(rename = "vg", alias = "gamma")]
    Gamma,
    /// Inverse Gaussian subordinator (Normal Inverse Gaussian model).
    #[serde(rename = "nig", alias = "inverse-gaussian")]
    InverseGaussian,
}

impl FromStr for Clock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vg" | "gamma" => Ok(Clock::Gamma),
            "nig" | "ig" | "inverse-gaussian" => Ok(Clock::InverseGaussian),
            other => Err(Error::invalid("clock", format!("unknown subordinator `{other}`"))),
        }
    }
}

/// Parameter vector `(sigma, kappa, theta, b)` plus the subordinator family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Volatility per square-root day.
    pub sigma: f64,
    /// Variance rate of the clock, in days.
    pub kappa: f64,
    /// Drift in business time.
    #[serde(default)]
    pub theta: f64,
    /// Drift in calendar time.
    #[serde(default)]
    pub b: f64,
    pub clock: Clock,
}

impl ModelParams {
    /// Symmetric, driftless model (`theta = b = 0`).
    pub fn new(sigma: f64, kappa: f64, clock: Clock) -> Result<Self> {
        let params = ModelParams { sigma, kappa, theta: 0.0, b: 0.0, clock };
        params.validate()?;
        Ok(params)
    }

    pub fn with_drifts(mut self, theta: f64, b: f64) -> Result<Self> {
        self.theta = theta;
        self.b = b;
        self.validate()?;
        Ok(self)
    }

    /// `sigma = 0` is accepted so degenerate (pure drift / pure noise) paths can be
    /// simulated; estimators reject a zero volatility where it matters.
    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::invalid("sigma", format!("must be finite and >= 0, got {}", self.sigma)));
        }
        if !self.kappa.is_finite() || self.kappa <= 0.0 {
            return Err(Error::invalid("kappa", format!("must be finite and > 0, got {}", self.kappa)));
        }
        if !self.theta.is_finite() {
            return Err(Error::invalid("theta", "must be finite"));
        }
        if !self.b.is_finite() {
            return Err(Error::invalid("b", "must be finite"));
        }
        Ok(())
    }
}

/// A sampling interval, stored in seconds of trading time.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Frequency(f64);

impl Frequency {
    pub fn from_seconds(seconds: f64) -> Result<Self> {
        if !seconds.is_finite() || seconds <= 0.0 {
            return Err(Error::invalid("frequency", format!("must be a positive duration, got {seconds}s")));
        }
        Ok(Frequency(seconds))
    }

    pub fn seconds(self) -> f64 {
        self.0
    }

    /// Spacing in days under the given day length.
    pub fn days(self, day_length_seconds: f64) -> f64 {
        self.0 / day_length_seconds
    }

    /// Short human label such as `5s`, `1min` or `1h`.
    pub fn label(self) -> String {
        let s = self.0;
        if s >= 3600.0 && (s / 3600.0).fract() == 0.0 {
            format!("{}h", s / 3600.0)
        } else if s >= 60.0 && (s / 60.0).fract() == 0.0 {
            format!("{}min", s / 60.0)
        } else {
            format!("{s}s")
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let split = s
            .find(|c: char| !(c.is_ascii_digit() || c == '.'))
            .ok_or_else(|| Error::invalid("frequency", format!("`{s}` has no unit (use s, min or h)")))?;
        let (num, unit) = s.split_at(split);
        let value: f64 = num
            .parse()
            .map_err(|_| Error::invalid("frequency", format!("cannot parse `{s}`")))?;
        let scale = match unit.trim().to_ascii_lowercase().as_str() {
            "s" | "sec" | "secs" | "second" | "seconds" => 1.0,
            "min" | "mins" | "minute" | "minutes" => 60.0,
            "h" | "hr" | "hrs" | "hour" | "hours" => 3600.0,
            other => return Err(Error::invalid("frequency", format!("unknown unit `{other}` in `{s}`"))),
        };
        Frequency::from_seconds(value * scale)
    }
}

impl Serialize for Frequency {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for Frequency {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Regular calendar-time grid over `[0, T]` with `n` increments.
///
/// The spacing is always derived as `T / n` and never stored on its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "SchemeRepr", try_from = "SchemeRepr")]
pub struct SamplingScheme {
    n: usize,
    t_days: f64,
    day_length_seconds: f64,
}

#[derive(Serialize, Deserialize)]
struct SchemeRepr {
    n: usize,
    t_days: f64,
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default = "default_day_seconds")]
    day_length_seconds: f64,
}

fn default_day_seconds() -> f64 {
    DEFAULT_DAY_SECONDS
}

impl From<SamplingScheme> for SchemeRepr {
    fn from(s: SamplingScheme) -> Self {
        SchemeRepr { n: s.n, t_days: s.t_days, delta: Some(s.delta()), day_length_seconds: s.day_length_seconds }
    }
}

impl TryFrom<SchemeRepr> for SamplingScheme {
    type Error = Error;

    fn try_from(r: SchemeRepr) -> Result<Self> {
        SamplingScheme::with_day_length(r.n, r.t_days, r.day_length_seconds)
    }
}

impl SamplingScheme {
    pub fn new(n: usize, t_days: f64) -> Result<Self> {
        Self::with_day_length(n, t_days, DEFAULT_DAY_SECONDS)
    }

    pub fn with_day_length(n: usize, t_days: f64, day_length_seconds: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "the grid needs at least one increment"));
        }
        if !t_days.is_finite() || t_days <= 0.0 {
            return Err(Error::invalid("t_days", format!("must be finite and > 0, got {t_days}")));
        }
        if !day_length_seconds.is_finite() || day_length_seconds <= 0.0 {
            return Err(Error::invalid("day_length_seconds", "must be finite and > 0"));
        }
        Ok(SamplingScheme { n, t_days, day_length_seconds })
    }

    /// Grid with spacing `freq` over `t_days` days. The horizon must hold an
    /// integral number of intervals.
    pub fn from_frequency(t_days: f64, freq: Frequency, day_length_seconds: f64) -> Result<Self> {
        let steps = t_days * day_length_seconds / freq.seconds();
        let n = steps.round();
        if !steps.is_finite() || n < 1.0 || (steps - n).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::invalid(
                "frequency",
                format!("{t_days} days is not a whole number of {} intervals", freq.label()),
            ));
        }
        Self::with_day_length(n as usize, t_days, day_length_seconds)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_days(&self) -> f64 {
        self.t_days
    }

    pub fn day_length_seconds(&self) -> f64 {
        self.day_length_seconds
    }

    pub fn delta(&self) -> f64 {
        self.t_days / self.n as f64
    }
}

/// White Gaussian microstructure noise with standard deviation `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub rho: f64,
}

impl NoiseSpec {
    pub fn new(rho: f64) -> Result<Self> {
        if !rho.is_finite() || rho < 0.0 {
            return Err(Error::invalid("rho", format!("must be finite and >= 0, got {rho}")));
        }
        Ok(NoiseSpec { rho })
    }

    pub fn none() -> Self {
        NoiseSpec { rho: 0.0 }
    }
}

/// Ordered increments of an observed log-price on a [`SamplingScheme`].
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSeries {
    values: Vec<f64>,
    scheme: SamplingScheme,
    noisy: bool,
}

impl IncrementSeries {
    pub fn new(values: Vec<f64>, scheme: SamplingScheme, noisy: bool) -> Result<Self> {
        if values.len() != scheme.n() {
            return Err(Error::invalid(
                "values",
                format!("{} increments for a grid of n={}", values.len(), scheme.n()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("values", format!("increment {i} is not finite")));
        }
        Ok(IncrementSeries { values, scheme, noisy })
    }

    /// Series spanning `t_days` whose spacing is `t_days / values.len()`.
    pub fn from_values(values: Vec<f64>, t_days: f64) -> Result<Self> {
        let scheme = SamplingScheme::new(values.len(), t_days)?;
        Self::new(values, scheme, true)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scheme(&self) -> &SamplingScheme {
        &self.scheme
    }

    pub fn is_noisy(&self) -> bool {
        self.noisy
    }

    pub fn n(&self) -> usize {
        self.scheme.n()
    }

    pub fn t_days(&self) -> f64 {
        self.scheme.t_days()
    }

    pub fn delta(&self) -> f64 {
        self.scheme.delta()
    }

    /// Same increments multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        IncrementSeries { values: self.values.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Seed of one random stream: a master seed and a stream index.
///
/// Streams with the same master seed and distinct indices are independent
/// ChaCha8 streams, so replicate `r` of a Monte Carlo run can be generated
/// without touching the state of any other replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub master: u64,
    #[serde(default)]
    pub stream: u64,
}

impl Seed {
    pub fn new(master: u64) -> Self {
        Seed { master, stream: 0 }
    }

    pub fn replicate(master: u64, index: u64) -> Self {
        Seed { master, stream: index }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

impl From<u64> for Seed {
    fn from(master: u64) -> Self {
        Seed::new(master)
    }
}

/// Draws `IG(mean, shape)` by the Michael-Schucany-Haas transformation.
///
/// The smaller root is computed as `mean / (1 + r + sqrt(r (2 + r)))`, which
/// does not cancel when `mean * y / shape` is large (very skewed clocks on fine grids).
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, shape: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    let r = mean * z * z / (2.0 * shape);
    let x = mean / (1.0 + r + (r * (2.0 + r)).sqrt());
    let u: f64 = rng.random();
    if u * (mean + x) <= mean {
        x
    } else {
        mean * mean / x
    }
}

fn draw_clock<R: Rng + ?Sized>(params: &ModelParams, delta: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let kappa = params.kappa;
    match params.clock {
        Clock::Gamma => {
            let gamma = Gamma::new(delta / kappa, kappa)
                .map_err(|e| Error::invalid("kappa", format!("gamma clock: {e}")))?;
            Ok((0..n).map(|_| gamma.sample(rng)).collect())
        }
        Clock::InverseGaussian => {
            let shape = delta * delta / kappa;
            if !(shape.is_finite() && shape > 0.0) {
                return Err(Error::invalid("kappa", "inverse gaussian shape underflows"));
            }
            Ok((0..n).map(|_| sample_inverse_gaussian(rng, delta, shape)).collect())
        }
    }
}

/// `n` i.i.d. clock increments `tau((i) delta) - tau((i-1) delta)`, in days.
///
/// Values are non-negative: for tiny Gamma shapes (`delta / kappa` around
/// 1e-3) a sizeable share of exact draws lies below the smallest `f64` and
/// rounds to zero.
pub fn sample_subordinator_increments(
    params: &ModelParams,
    scheme: &SamplingScheme,
    seed: impl Into<Seed>,
) -> Result<Vec<f64>> {
    params.validate()?;
    let mut rng = seed.into().rng();
    draw_clock(params, scheme.delta(), scheme.n(), &mut rng)
}

/// Simulates `Delta_i X~ = sigma sqrt(dtau_i) Z_i + theta dtau_i + b delta + eps_i - eps_{i-1}`.
///
/// Draw order within a stream is fixed: all clock increments, then the
/// Gaussian innovations, then the `n + 1` noise values. The clock increments
/// therefore coincide with [`sample_subordinator_increments`] for the same seed.
pub fn simulate_increments(
    params: &ModelParams,
    scheme: &SamplingScheme,
    noise: &NoiseSpec,
    seed: impl Into<Seed>,
) -> Result<IncrementSeries> {
    let mut rng = seed.into().rng();
    simulate_with_rng(params, scheme, noise, &mut rng)
}

pub fn simulate_with_rng<R: Rng + ?Sized>(
    params: &ModelParams,
    scheme: &SamplingScheme,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<IncrementSeries> {
    params.validate()?;
    NoiseSpec::new(noise.rho)?;
    let n = scheme.n();
    let delta = scheme.delta();
    let clock = draw_clock(params, delta, n, rng)?;
    let drift = params.b * delta;
    let mut values: Vec<f64> = clock
        .iter()
        .map(|&dtau| {
            let z: f64 = StandardNormal.sample(rng);
            params.sigma * dtau.sqrt() * z + params.theta * dtau + drift
        })
        .collect();
    let noisy = noise.rho > 0.0;
    if noisy {
        let mut prev = noise.rho * rng.sample::<f64, _>(StandardNormal);
        for v in values.iter_mut() {
            let next = noise.rho * rng.sample::<f64, _>(StandardNormal);
            *v += next - prev;
            prev = next;
        }
    }
    IncrementSeries::new(values, *scheme, noisy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    fn fourth_central(xs: &[f64], mean: f64) -> f64 {
        xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / xs.len() as f64
    }

    fn check_clock_moments(clock: Clock) {
        let delta = 0.1;
        let kappa = 0.3;
        let params = ModelParams::new(0.02, kappa, clock).unwrap();
        let scheme = SamplingScheme::new(1_000_000, 1_000_000.0 * delta).unwrap();
        let draws = sample_subordinator_increments(&params, &scheme, 11).unwrap();
        assert!(draws.iter().all(|&d| d >= 0.0));
        let (mean, var) = mean_var(&draws);
        let n = draws.len() as f64;
        let se_mean = (var / n).sqrt();
        let m4 = fourth_central(&draws, mean);
        let se_var = ((m4 - var * var) / n).sqrt();
        assert!((mean - delta).abs() < 3.0 * se_mean, "{clock:?}: mean {mean} se {se_mean}");
        assert!((var - kappa * delta).abs() < 3.0 * se_var, "{clock:?}: var {var} se {se_var}");
    }

    #[test]
    fn gamma_clock_matches_mean_and_variance() {
        check_clock_moments(Clock::Gamma);
    }

    #[test]
    fn inverse_gaussian_clock_matches_mean_and_variance() {
        check_clock_moments(Clock::InverseGaussian);
    }

    #[test]
    fn inverse_gaussian_is_stable_for_skewed_shapes() {
        // mean 1/2340 day, shape mean^2/0.3: the naive root formula cancels here.
        let mean = 1.0 / 2340.0;
        let shape = mean * mean / 0.3;
        let mut rng = Seed::new(5).rng();
        let draws: Vec<f64> = (0..400_000).map(|_| sample_inverse_gaussian(&mut rng, mean, shape)).collect();
        assert!(draws.iter().all(|&d| d > 0.0 && d.is_finite()));
        let (m, v) = mean_var(&draws);
        let se = (v / draws.len() as f64).sqrt();
        assert!((m - mean).abs() < 4.0 * se);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        for clock in [Clock::Gamma, Clock::InverseGaussian] {
            let params = ModelParams::new(0.02, 0.3, clock).unwrap();
            let scheme = SamplingScheme::new(1000, 10.0).unwrap();
            let noise = NoiseSpec::new(0.005).unwrap();
            let a = simulate_increments(&params, &scheme, &noise, 42).unwrap();
            let b = simulate_increments(&params, &scheme, &noise, 42).unwrap();
            assert_eq!(a, b);
            let c = simulate_increments(&params, &scheme, &noise, Seed::replicate(42, 1)).unwrap();
            assert_ne!(a.values(), c.values());
        }
    }

    #[test]
    fn clock_draws_match_the_simulated_path() {
        let params = ModelParams::new(1.0, 0.3, Clock::Gamma).unwrap();
        let scheme = SamplingScheme::new(50, 5.0).unwrap();
        let clock = sample_subordinator_increments(&params, &scheme, 9).unwrap();
        let pure_clock = params.with_drifts(1.0, 0.0).unwrap();
        let mut zero_vol = pure_clock;
        zero_vol.sigma = 0.0;
        let path = simulate_increments(&zero_vol, &scheme, &NoiseSpec::none(), 9).unwrap();
        assert_eq!(path.values(), clock.as_slice());
    }

    #[test]
    fn degenerate_model_gives_zero_increments() {
        let mut params = ModelParams::new(0.02, 0.3, Clock::Gamma).unwrap();
        params.sigma = 0.0;
        let scheme = SamplingScheme::new(100, 1.0).unwrap();
        let s = simulate_increments(&params, &scheme, &NoiseSpec::none(), 1).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
        assert!(!s.is_noisy());
    }

    #[test]
    fn pure_drift_gives_constant_increments() {
        let mut params = ModelParams::new(0.0, 0.3, Clock::InverseGaussian).unwrap().with_drifts(0.0, 2.0).unwrap();
        params.sigma = 0.0;
        let scheme = SamplingScheme::new(8, 4.0).unwrap();
        assert_eq!(scheme.delta(), 0.5);
        let s = simulate_increments(&params, &scheme, &NoiseSpec::none(), 3).unwrap();
        assert!(s.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pure_noise_telescopes() {
        // With sigma = 0 the increment sum is eps_n - eps_0 ~ N(0, 2 rho^2).
        let params = ModelParams { sigma: 0.0, kappa: 0.3, theta: 0.0, b: 0.0, clock: Clock::Gamma };
        let scheme = SamplingScheme::new(64, 1.0).unwrap();
        let rho = 0.005;
        let noise = NoiseSpec::new(rho).unwrap();
        let sums: Vec<f64> = (0..4000)
            .map(|r| simulate_increments(&params, &scheme, &noise, Seed::replicate(77, r)).unwrap().values().iter().sum())
            .collect();
        let (m, v) = mean_var(&sums);
        let target = 2.0 * rho * rho;
        let se_v = target * (2.0 / sums.len() as f64).sqrt();
        assert!(m.abs() < 4.0 * (target / sums.len() as f64).sqrt());
        assert!((v - target).abs() < 4.0 * se_v, "var {v} target {target}");
    }

    #[test]
    fn noisy_increment_variance() {
        let params = ModelParams::new(0.02, 0.3, Clock::Gamma).unwrap();
        let delta = 1.0 / 390.0;
        let scheme = SamplingScheme::new(1_000_000, 1_000_000.0 * delta).unwrap();
        let rho = 0.005;
        let s = simulate_increments(&params, &scheme, &NoiseSpec::new(rho).unwrap(), 21).unwrap();
        let xs = s.values();
        let (mean, var) = mean_var(xs);
        let m4 = fourth_central(xs, mean);
        let se = ((m4 - var * var) / xs.len() as f64).sqrt();
        let target = 0.02f64.powi(2) * delta + 2.0 * rho * rho;
        assert!((var - target).abs() < 3.0 * se, "var {var} target {target} se {se}");
    }

    #[test]
    fn noise_free_fourth_moment() {
        let sigma = 0.02f64;
        let kappa = 0.3;
        let delta = 0.1;
        let params = ModelParams::new(sigma, kappa, Clock::Gamma).unwrap();
        let scheme = SamplingScheme::new(1_000_000, 1_000_000.0 * delta).unwrap();
        let s = simulate_increments(&params, &scheme, &NoiseSpec::none(), 8).unwrap();
        let xs = s.values();
        let n = xs.len() as f64;
        let m4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / n;
        let m8 = xs.iter().map(|x| x.powi(8)).sum::<f64>() / n;
        let se = ((m8 - m4 * m4) / n).sqrt();
        let target = 3.0 * sigma.powi(4) * kappa * delta + 3.0 * sigma.powi(4) * delta * delta;
        assert!((m4 - target).abs() < 3.0 * se, "m4 {m4} target {target} se {se}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ModelParams::new(0.02, 0.0, Clock::Gamma).is_err());
        assert!(ModelParams::new(f64::NAN, 0.3, Clock::Gamma).is_err());
        assert!(SamplingScheme::new(0, 1.0).is_err());
        assert!(SamplingScheme::new(10, -1.0).is_err());
        assert!(NoiseSpec::new(-0.1).is_err());
    }

    #[test]
    fn frequency_labels_resolve_to_day_units() {
        let f: Frequency = "1min".parse().unwrap();
        assert_eq!(f.seconds(), 60.0);
        let scheme = SamplingScheme::from_frequency(252.0, f, DEFAULT_DAY_SECONDS).unwrap();
        assert_eq!(scheme.n(), 98_280);
        assert_eq!("5s".parse::<Frequency>().unwrap().seconds(), 5.0);
        assert_eq!("1h".parse::<Frequency>().unwrap().label(), "1h");
        assert_eq!("30 sec".parse::<Frequency>().unwrap().label(), "30s");
        assert!("5 parsecs".parse::<Frequency>().is_err());
        assert!(SamplingScheme::from_frequency(1.0, "7s".parse().unwrap(), DEFAULT_DAY_SECONDS).is_err());
    }

    #[test]
    fn scheme_serializes_with_delta() {
        let scheme = SamplingScheme::new(4, 2.0).unwrap();
        let json = serde_json::to_value(scheme).unwrap();
        assert_eq!(json["delta"], 0.5);
        let back: SamplingScheme = serde_json::from_value(json).unwrap();
        assert_eq!(back, scheme);
    }
}
