//! Monte Carlo experiments: estimator tables, log-variance rate regressions
//! and the checks of the noise-limit and small-time expansion laws.
//!
//! Replicate `r` of slot `s` (a frequency or a horizon) draws from the
//! ChaCha8 stream `(s << 32) | r` of the master seed, and results are written
//! into pre-assigned slots, so every number is independent of thread count and
//! scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::estimators::{mme_kappa, mme_sigma2, EstimatorId};
use crate::sim::{
    simulate_increments, Frequency, IncrementSeries, ModelParams, NoiseSpec, SamplingScheme, Seed,
    DEFAULT_DAY_SECONDS,
};
use crate::tuning::{plugin_kappa_from_sigma, plugin_sigma_with, run_oracle, PluginConfig, PluginTrace, Stage, Variant};
use crate::variations::CompensatedSum;

/// Trading days per month in horizon labels such as "12m".
pub const DAYS_PER_MONTH: f64 = 21.0;

/// Share of failed replications above which a cell is flagged.
pub const FAILURE_FLAG_FRACTION: f64 = 0.01;

fn default_day() -> f64 {
    DEFAULT_DAY_SECONDS
}

fn default_sigma0() -> f64 {
    crate::tuning::DEFAULT_SIGMA0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub model: ModelParams,
    pub noise: NoiseSpec,
    pub t_days: f64,
    pub frequencies: Vec<Frequency>,
    pub replications: usize,
    pub master_seed: u64,
    pub estimators: Vec<EstimatorId>,
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    #[serde(default = "default_day")]
    pub day_length_seconds: f64,
    #[serde(default)]
    pub classic_k2: bool,
    /// Worker threads; `None` uses the global rayon pool. Does not affect results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl MCConfig {
    /// VG design with `sigma = 0.02`, `kappa = 0.3`, `rho = 0.005`, `T = 252`.
    pub fn reference_design(frequencies: Vec<Frequency>, replications: usize, estimators: Vec<EstimatorId>) -> Self {
        MCConfig {
            model: ModelParams::new(0.02, 0.3, crate::sim::Clock::Gamma).expect("valid reference model"),
            noise: NoiseSpec::new(0.005).expect("valid reference noise"),
            t_days: 252.0,
            frequencies,
            replications,
            master_seed: 2024,
            estimators,
            sigma0: default_sigma0(),
            day_length_seconds: DEFAULT_DAY_SECONDS,
            classic_k2: false,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        NoiseSpec::new(self.noise.rho)?;
        if self.replications < 2 {
            return Err(Error::invalid("replications", format!("need at least 2, got {}", self.replications)));
        }
        if self.frequencies.is_empty() {
            return Err(Error::invalid("frequencies", "need at least one grid spacing"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("estimators", "need at least one estimator"));
        }
        if !(self.sigma0.is_finite() && self.sigma0 > 0.0) {
            return Err(Error::invalid("sigma0", "must be finite and > 0"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads", "must be >= 1"));
        }
        for f in &self.frequencies {
            self.scheme(*f, self.t_days)?;
        }
        Ok(())
    }

    pub fn scheme(&self, freq: Frequency, t_days: f64) -> Result<SamplingScheme> {
        SamplingScheme::from_frequency(t_days, freq, self.day_length_seconds)
    }

    pub fn plugin(&self) -> PluginConfig {
        PluginConfig { sigma0: self.sigma0, classic_k2: self.classic_k2 }
    }

    /// True value of the parameter an estimator targets.
    pub fn truth(&self, id: EstimatorId) -> f64 {
        if id.targets_sigma() {
            self.model.sigma
        } else {
            self.model.kappa
        }
    }
}

/// Runs `f` inside a dedicated pool when a thread count is given.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn stream(slot: usize, replicate: usize) -> u64 {
    ((slot as u64) << 32) | replicate as u64
}

/// Simulates `replications` independent paths and maps each through `f`.
///
/// Output order is replicate order.
pub fn replicate_map<T, F>(
    model: &ModelParams,
    noise: &NoiseSpec,
    scheme: &SamplingScheme,
    replications: usize,
    master_seed: u64,
    slot: usize,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&IncrementSeries) -> T + Sync,
{
    (0..replications)
        .into_par_iter()
        .map(|r| {
            let series = simulate_increments(model, scheme, noise, Seed::replicate(master_seed, stream(slot, r)))?;
            Ok(f(&series))
        })
        .collect()
}

/// Lazily shared plug-in chains for one replicate.
struct Evaluator<'a> {
    series: &'a IncrementSeries,
    plugin: PluginConfig,
    model: &'a ModelParams,
    noise: &'a NoiseSpec,
    chains: [Option<std::result::Result<PluginTrace, String>>; 3],
}

impl<'a> Evaluator<'a> {
    fn chain(&mut self, variant: Variant) -> std::result::Result<&PluginTrace, String> {
        let slot = &mut self.chains[variant.index() as usize - 1];
        if slot.is_none() {
            *slot = Some(plugin_sigma_with(self.series, &self.plugin, variant).map_err(|e| e.to_string()));
        }
        slot.as_ref().unwrap().as_ref().map_err(Clone::clone)
    }

    fn sigma_stage(&mut self, variant: Variant, stage: Stage) -> std::result::Result<f64, String> {
        let value = self.chain(variant)?.get(stage).expect("stage present").value;
        volatility(value)
    }

    fn eval(&mut self, id: EstimatorId) -> std::result::Result<f64, String> {
        use EstimatorId::*;
        use Variant::*;
        match id {
            MmeSigma => volatility(mme_sigma2(self.series).map_err(|e| e.to_string())?),
            MmeKappa => mme_kappa(self.series).map_err(|e| e.to_string()),
            Sigma1Prime => self.sigma_stage(V1, Stage::SigmaPrime(V1)),
            Sigma1 => self.sigma_stage(V1, Stage::SigmaDoublePrime(V1)),
            Sigma2Prime => self.sigma_stage(V2, Stage::SigmaPrime(V2)),
            Sigma2 => self.sigma_stage(V2, Stage::SigmaDoublePrime(V2)),
            Sigma3Prime => self.sigma_stage(V3, Stage::SigmaPrime(V3)),
            Sigma3 => self.sigma_stage(V3, Stage::SigmaDoublePrime(V3)),
            Kappa1 | Kappa2 | Kappa3 => {
                let variant = match id {
                    Kappa1 => V1,
                    Kappa2 => V2,
                    _ => V3,
                };
                let series = self.series;
                let trace = self.chain(V3)?;
                let trace = plugin_kappa_from_sigma(series, trace, variant).map_err(|e| e.to_string())?;
                Ok(trace.last().value)
            }
            OracleSigmaK2 | OracleKappaK4 => run_oracle(self.series, id, self.model, self.noise).map_err(|e| e.to_string()),
        }
    }
}

fn volatility(sigma2: f64) -> std::result::Result<f64, String> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(sigma2.sqrt())
    } else {
        Err(format!("variance estimate {sigma2:e} is not positive"))
    }
}

/// Evaluates several estimators on one path, sharing plug-in chains.
pub fn evaluate_estimators(
    series: &IncrementSeries,
    ids: &[EstimatorId],
    plugin: &PluginConfig,
    model: &ModelParams,
    noise: &NoiseSpec,
) -> Vec<std::result::Result<f64, String>> {
    let mut ev = Evaluator { series, plugin: *plugin, model, noise, chains: [None, None, None] };
    ids.iter().map(|&id| ev.eval(id)).collect()
}

/// Mean, SD (with `R - 1`) and MSE of a sample around `truth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub sd: f64,
    pub mse: f64,
    pub count: usize,
}

impl SampleStats {
    pub fn of(values: &[f64], truth: f64) -> Self {
        let count = values.len();
        let r = count as f64;
        let mean = values.iter().copied().collect::<CompensatedSum>().value() / r;
        let ss = values.iter().map(|v| (v - mean) * (v - mean)).collect::<CompensatedSum>().value();
        let sd = if count > 1 { (ss / (r - 1.0)).sqrt() } else { f64::NAN };
        let mse = values.iter().map(|v| (v - truth) * (v - truth)).collect::<CompensatedSum>().value() / r;
        SampleStats { mean, sd, mse, count }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        self.sd / (self.count as f64).sqrt()
    }

    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub frequency: Frequency,
    pub estimator: EstimatorId,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub mse: f64,
    /// Successful replications.
    pub replications: usize,
    pub failures: usize,
    pub flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
    /// Successful per-replicate values, in replicate order.
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl CellSummary {
    fn build(frequency: Frequency, estimator: EstimatorId, truth: f64, results: Vec<std::result::Result<f64, String>>) -> Self {
        let total = results.len();
        let mut values = Vec::with_capacity(total);
        let mut first_failure = None;
        for r in results {
            match r {
                Ok(v) => values.push(v),
                Err(e) => {
                    first_failure.get_or_insert(e);
                }
            }
        }
        let failures = total - values.len();
        let stats = SampleStats::of(&values, truth);
        CellSummary {
            frequency,
            estimator,
            truth,
            mean: stats.mean,
            sd: stats.sd,
            mse: stats.mse,
            replications: values.len(),
            failures,
            flagged: failures as f64 > FAILURE_FLAG_FRACTION * total as f64,
            first_failure,
            values,
        }
    }

    pub fn se(&self) -> f64 {
        self.sd / (self.replications as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCSummary {
    pub config: MCConfig,
    pub cells: Vec<CellSummary>,
}

impl MCSummary {
    pub fn cell(&self, frequency: Frequency, estimator: EstimatorId) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.frequency == frequency && c.estimator == estimator)
    }
}

/// Runs every configured estimator on `R` paths per frequency.
pub fn run_table(config: &MCConfig) -> Result<MCSummary> {
    config.validate()?;
    let plugin = config.plugin();
    let mut cells = Vec::new();
    for (slot, &freq) in config.frequencies.iter().enumerate() {
        let scheme = config.scheme(freq, config.t_days)?;
        let per_rep = with_threads(config.threads, || {
            replicate_map(&config.model, &config.noise, &scheme, config.replications, config.master_seed, slot, |s| {
                evaluate_estimators(s, &config.estimators, &plugin, &config.model, &config.noise)
            })
        })??;
        for (j, &id) in config.estimators.iter().enumerate() {
            let results = per_rep.iter().map(|rep| rep[j].clone()).collect();
            cells.push(CellSummary::build(freq, id, config.truth(id), results));
        }
    }
    Ok(MCSummary { config: config.clone(), cells })
}

/// Ordinary least-squares line with a two-sided 95% t-interval for the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub half_width: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let m = x.len();
    if m != y.len() {
        return Err(Error::invalid("points", "x and y lengths differ"));
    }
    if m < 3 {
        return Err(Error::TooFewObservations { needed: 3, got: m });
    }
    let mf = m as f64;
    let xm = x.iter().sum::<f64>() / mf;
    let ym = y.iter().sum::<f64>() / mf;
    let sxx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let syy: f64 = y.iter().map(|b| (b - ym).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("regressor has no spread".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let df = mf - 2.0;
    let t = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Degenerate(e.to_string()))?
        .inverse_cdf(0.975);
    let half_width = t * (sse / df / sxx).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LineFit { slope, half_width, intercept, r_squared, points: m })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub t_days: f64,
    pub log_t: f64,
    pub variance: f64,
    pub log_variance: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    pub frequency: Frequency,
    pub estimator: EstimatorId,
    pub points: Vec<RatePoint>,
    /// Horizons whose variance estimate was not positive or had no successes.
    pub dropped: Vec<f64>,
    pub fit: Option<LineFit>,
}

impl RateSeries {
    /// Refit on horizons inside `[lo, hi]` days.
    pub fn fit_range(&self, lo: f64, hi: f64) -> Result<LineFit> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .points
            .iter()
            .filter(|p| p.t_days >= lo && p.t_days <= hi)
            .map(|p| (p.log_t, p.log_variance))
            .unzip();
        ols_fit(&x, &y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRegressionResult {
    pub config: MCConfig,
    pub horizons: Vec<f64>,
    pub series: Vec<RateSeries>,
}

impl RateRegressionResult {
    pub fn get(&self, frequency: Frequency, estimator: EstimatorId) -> Option<&RateSeries> {
        self.series.iter().find(|s| s.frequency == frequency && s.estimator == estimator)
    }
}

/// Builds a rate series from `(T, variance)` pairs, dropping non-positive variances.
pub fn rate_series(frequency: Frequency, estimator: EstimatorId, data: &[(f64, f64, usize)]) -> RateSeries {
    let mut points = Vec::new();
    let mut dropped = Vec::new();
    for &(t, var, reps) in data {
        if var > 0.0 && var.is_finite() {
            points.push(RatePoint { t_days: t, log_t: t.ln(), variance: var, log_variance: var.ln(), replications: reps });
        } else {
            dropped.push(t);
        }
    }
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.log_t, p.log_variance)).unzip();
    let fit = ols_fit(&x, &y).ok();
    RateSeries { frequency, estimator, points, dropped, fit }
}

/// Monte Carlo variance of each estimator at each horizon and the fit of
/// `log Var` on `log T`. All estimators share the same paths; `config.t_days`
/// is ignored in favour of `horizons_days`.
pub fn rate_regression(config: &MCConfig, horizons_days: &[f64]) -> Result<RateRegressionResult> {
    config.validate()?;
    if horizons_days.len() < 3 {
        return Err(Error::TooFewObservations { needed: 3, got: horizons_days.len() });
    }
    let plugin = config.plugin();
    let mut series = Vec::new();
    for (fi, &freq) in config.frequencies.iter().enumerate() {
        let mut data: Vec<Vec<(f64, f64, usize)>> = vec![Vec::new(); config.estimators.len()];
        for (ti, &t) in horizons_days.iter().enumerate() {
            let scheme = config.scheme(freq, t)?;
            let slot = fi * horizons_days.len() + ti;
            let per_rep = with_threads(config.threads, || {
                replicate_map(&config.model, &config.noise, &scheme, config.replications, config.master_seed, slot, |s| {
                    evaluate_estimators(s, &config.estimators, &plugin, &config.model, &config.noise)
                })
            })??;
            for (j, &id) in config.estimators.iter().enumerate() {
                let ok: Vec<f64> = per_rep.iter().filter_map(|rep| rep[j].clone().ok()).collect();
                let var = if ok.len() >= 2 { SampleStats::of(&ok, config.truth(id)).variance() } else { f64::NAN };
                data[j].push((t, var, ok.len()));
            }
        }
        for (j, &id) in config.estimators.iter().enumerate() {
            series.push(rate_series(freq, id, &data[j]));
        }
    }
    Ok(RateRegressionResult { config: config.clone(), horizons: horizons_days.to_vec(), series })
}

/// Horizons `lo..=hi` months in days.
pub fn monthly_horizons(lo: u32, hi: u32) -> Vec<f64> {
    (lo..=hi).map(|m| m as f64 * DAYS_PER_MONTH).collect()
}

/// Cumulants `c2, c4, c6, c8` of a unit-time symmetric VG increment, read off
/// the power series of `psi(u) = -(1/kappa) ln(1 + kappa sigma^2 u^2 / 2)`.
pub fn vg_cumulants(sigma: f64, kappa: f64) -> [f64; 4] {
    // psi as a series in v = u^2: ln(1 + a v) = sum_j (-1)^{j+1} (a v)^j / j
    let a = kappa * sigma * sigma / 2.0;
    let mut out = [0.0; 4];
    let mut factorial = 1.0;
    let mut m = 0u32;
    for (j, slot) in (1..=4u32).zip(out.iter_mut()) {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        let coeff_v = -(1.0 / kappa) * sign * a.powi(j as i32) / j as f64;
        while m < 2 * j {
            m += 1;
            factorial *= m as f64;
        }
        // psi = sum c_m (iu)^m / m!, and (iu)^{2j} = (-1)^j u^{2j}
        let i_pow = if j % 2 == 0 { 1.0 } else { -1.0 };
        *slot = coeff_v * factorial * i_pow;
    }
    out
}

/// Leading `1/T` coefficients of bias and MSE of the moment kurtosis estimator
/// from the cumulants `[c2, c4, c6, c8]`.
///
/// The MSE term is the delta-method variance of `[4] / (3 [2]^2)`.
pub fn kurtosis_expansion(c: [f64; 4]) -> (f64, f64) {
    let [c2, c4, c6, c8] = c;
    let bias = (3.0 * c4 * c4 - 2.0 * c6 * c2) / (3.0 * c2.powi(4));
    let mse = (c8 * c2 - 4.0 * c4 * c6 + 4.0 * c4.powi(3) / c2) / (9.0 * c2.powi(5));
    (bias, mse)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitPoint {
    pub frequency: Frequency,
    pub delta_days: f64,
    pub mean: f64,
    pub se: f64,
    pub target: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCheck {
    pub frequency: Frequency,
    pub t_days: f64,
    pub replications: usize,
    pub cumulants: [f64; 4],
    pub mean: f64,
    pub se: f64,
    pub predicted_mean: f64,
    pub mse: f64,
    pub predicted_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    /// `delta * sigma2_mme` on noisy data, target `2 rho^2`.
    pub noise_variance: Vec<LimitPoint>,
    /// `kappa_mme / delta` on noisy data, target `E eps~^4 / (3 (E eps~^2)^2) = 1`.
    pub noise_kurtosis: Vec<LimitPoint>,
    pub expansion: Option<ExpansionCheck>,
}

/// Moment estimators on noisy paths over the configured frequencies.
pub fn noise_limits(config: &MCConfig) -> Result<(Vec<LimitPoint>, Vec<LimitPoint>)> {
    config.validate()?;
    let rho2 = config.noise.rho * config.noise.rho;
    let mut var_pts = Vec::new();
    let mut kurt_pts = Vec::new();
    for (slot, &freq) in config.frequencies.iter().enumerate() {
        let scheme = config.scheme(freq, config.t_days)?;
        let delta = scheme.delta();
        let per_rep = with_threads(config.threads, || {
            replicate_map(&config.model, &config.noise, &scheme, config.replications, config.master_seed, slot, |s| {
                let v = mme_sigma2(s).map(|x| x * delta);
                let k = mme_kappa(s).map(|x| x / delta);
                (v.ok(), k.ok())
            })
        })??;
        let vs: Vec<f64> = per_rep.iter().filter_map(|p| p.0).collect();
        let ks: Vec<f64> = per_rep.iter().filter_map(|p| p.1).collect();
        for (vals, target, out) in [(vs, 2.0 * rho2, &mut var_pts), (ks, 1.0, &mut kurt_pts)] {
            let st = SampleStats::of(&vals, target);
            out.push(LimitPoint {
                frequency: freq,
                delta_days: delta,
                mean: st.mean,
                se: st.se(),
                target,
                relative_error: (st.mean - target).abs() / target,
            });
        }
    }
    Ok((var_pts, kurt_pts))
}

/// Noise-free moment kurtosis estimator on a fine grid against the cumulant expansion.
pub fn expansion_check(
    model: &ModelParams,
    t_days: f64,
    freq: Frequency,
    day_length_seconds: f64,
    replications: usize,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<ExpansionCheck> {
    model.validate()?;
    if replications < 2 {
        return Err(Error::invalid("replications", "need at least 2"));
    }
    let scheme = SamplingScheme::from_frequency(t_days, freq, day_length_seconds)?;
    let vals = with_threads(threads, || {
        replicate_map(model, &NoiseSpec::none(), &scheme, replications, master_seed, 0, |s| mme_kappa(s).ok())
    })??;
    let vals: Vec<f64> = vals.into_iter().flatten().collect();
    let cumulants = vg_cumulants(model.sigma, model.kappa);
    let (a, b) = kurtosis_expansion(cumulants);
    let st = SampleStats::of(&vals, model.kappa);
    Ok(ExpansionCheck {
        frequency: freq,
        t_days,
        replications: st.count,
        cumulants,
        mean: st.mean,
        se: st.se(),
        predicted_mean: model.kappa + a / t_days,
        mse: st.mse,
        predicted_mse: b / t_days,
    })
}

/// Runs the noise-limit checks over `config.frequencies` and, when `fine` is
/// given, the noise-free expansion check at that spacing.
pub fn asymptotic_checks(config: &MCConfig, fine: Option<Frequency>) -> Result<AsymptoticReport> {
    let (noise_variance, noise_kurtosis) = noise_limits(config)?;
    let expansion = match fine {
        Some(f) => Some(expansion_check(
            &config.model,
            config.t_days,
            f,
            config.day_length_seconds,
            config.replications,
            config.master_seed,
            config.threads,
        )?),
        None => None,
    };
    Ok(AsymptoticReport { noise_variance, noise_kurtosis, expansion })
}
