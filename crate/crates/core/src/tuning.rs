//! Choice of the subsampling factor `K` and the two-stage plug-in procedures.
//!
//! Each `K*` rule is the exact minimiser of a two-term leading-order MSE (or
//! variance) objective in `K`:
//!
//! | rule | estimator | objective |
//! |------|-----------|-----------|
//! | `K*1` | two-scale `sigma^2` | `4 s^4 K/(3n) + 4 n^2 m2^2/(T^2 K^2)` |
//! | `K*2` | bias-corrected `sigma^2` | `4 s^4 K/(3n) + 4 n (m4 + m2^2)/(T^2 K^2)` |
//! | `K*3` | two-scale `kappa` | `(64/5) T^2 K^3/n^3 + n^2 d4^2/(T^2 K^2 s^8)` |
//! | `K*4` | bias-corrected `kappa` | `(64/5) T^2 K^3/n^3 + 2 n e/(9 s^8 T^2 K^2)` |
//!
//! with `m2 = E eps^2`, `m4 = E eps^4`, `d4 = E(eps_2 - eps_1)^4` and
//! `e = Var((eps_2 - eps_1)^4)`. Rounded values are clamped to `[2, n/2]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_noise_moments, mme_kappa, mme_sigma2, ts_kappa, ts_kappa_unbiased, tsrv_sigma2,
    tsrv_sigma2_unbiased, EstimateReport, EstimatorId, NoiseMoments, MOMENT_FLOOR,
};
use crate::sim::{IncrementSeries, ModelParams, NoiseSpec};

/// Starting volatility of the plug-in loops: an annualised volatility of one.
pub const DEFAULT_SIGMA0: f64 = 0.062_994_078_834_871_2; // 1 / sqrt(252)

/// Model and noise quantities entering the `K*` rules and MSE formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub n: usize,
    pub t_days: f64,
    pub sigma2: f64,
    pub kappa: f64,
    /// `E eps^2`
    pub m2_eps: f64,
    /// `E eps^4`
    pub m4_eps: f64,
    /// `E (eps_2 - eps_1)^4`
    pub m4_diff: f64,
    /// `Var((eps_2 - eps_1)^4)`
    pub e_eps: f64,
}

impl TheoryInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::invalid("n", format!("K* rules need n >= 4, got {}", self.n)));
        }
        if !(self.t_days.is_finite() && self.t_days > 0.0) {
            return Err(Error::invalid("t_days", "must be finite and > 0"));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::invalid("sigma2", format!("must be finite and > 0, got {}", self.sigma2)));
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("m2_eps", self.m2_eps),
            ("m4_eps", self.m4_eps),
            ("m4_diff", self.m4_diff),
            ("e_eps", self.e_eps),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Exact moments for white Gaussian noise with standard deviation `rho`:
    /// `E eps^2 = rho^2`, `E eps^4 = 3 rho^4`, `E eps~^4 = 12 rho^4`,
    /// `Var(eps~^4) = (105 - 9) (2 rho^2)^4 = 1536 rho^8`.
    pub fn gaussian(n: usize, t_days: f64, sigma: f64, kappa: f64, rho: f64) -> Result<Self> {
        let r2 = rho * rho;
        let inp = TheoryInputs {
            n,
            t_days,
            sigma2: sigma * sigma,
            kappa,
            m2_eps: r2,
            m4_eps: 3.0 * r2 * r2,
            m4_diff: 12.0 * r2 * r2,
            e_eps: 1536.0 * r2.powi(4),
        };
        inp.validate()?;
        Ok(inp)
    }

    pub fn for_model(n: usize, t_days: f64, model: &ModelParams, noise: &NoiseSpec) -> Result<Self> {
        Self::gaussian(n, t_days, model.sigma, model.kappa, noise.rho)
    }

    /// Inputs built from estimated noise moments; negative moment estimates are floored.
    pub fn from_moments(n: usize, t_days: f64, sigma2: f64, kappa: f64, m: &NoiseMoments) -> Result<Self> {
        let inp = TheoryInputs {
            n,
            t_days,
            sigma2,
            kappa,
            m2_eps: m.m2_eps.max(0.0),
            m4_eps: m.m4_eps_floored(),
            m4_diff: m.m4_diff.max(0.0),
            e_eps: m.e_eps.max(0.0),
        };
        inp.validate()?;
        Ok(inp)
    }
}

/// The four optimal-`K` rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KRule {
    K1,
    K2,
    K3,
    K4,
}

impl KRule {
    pub const ALL: [KRule; 4] = [KRule::K1, KRule::K2, KRule::K3, KRule::K4];

    /// Unrounded closed-form minimiser.
    pub fn raw(self, inp: &TheoryInputs) -> f64 {
        let n = inp.n as f64;
        let t = inp.t_days;
        let s4 = inp.sigma2 * inp.sigma2;
        let s8 = s4 * s4;
        match self {
            KRule::K1 => n * (6.0 * inp.m2_eps * inp.m2_eps / (t * t * s4)).cbrt(),
            KRule::K2 => n.powf(2.0 / 3.0) * (6.0 * (inp.m4_eps + inp.m2_eps * inp.m2_eps) / (t * t * s4)).cbrt(),
            KRule::K3 => n * (5.0 * inp.m4_diff * inp.m4_diff / (96.0 * t.powi(4) * s8)).powf(0.2),
            KRule::K4 => n.powf(0.8) * (5.0 * inp.e_eps / (27.0 * 16.0 * t.powi(4) * s8)).powf(0.2),
        }
    }

    /// Two-term objective the rule minimises, evaluated at real `k`.
    pub fn objective(self, inp: &TheoryInputs, k: f64) -> f64 {
        let n = inp.n as f64;
        let t = inp.t_days;
        let s4 = inp.sigma2 * inp.sigma2;
        let s8 = s4 * s4;
        match self {
            KRule::K1 => 4.0 * s4 * k / (3.0 * n) + 4.0 * n * n * inp.m2_eps * inp.m2_eps / (t * t * k * k),
            KRule::K2 => {
                4.0 * s4 * k / (3.0 * n) + 4.0 * n * (inp.m4_eps + inp.m2_eps * inp.m2_eps) / (t * t * k * k)
            }
            KRule::K3 => {
                64.0 / 5.0 * t * t * k.powi(3) / n.powi(3) + n * n * inp.m4_diff * inp.m4_diff / (t * t * k * k * s8)
            }
            KRule::K4 => 64.0 / 5.0 * t * t * k.powi(3) / n.powi(3) + 2.0 * n * inp.e_eps / (9.0 * s8 * t * t * k * k),
        }
    }

    /// Rounded to the nearest integer and clamped to `[2, n/2]`.
    pub fn k(self, inp: &TheoryInputs) -> usize {
        clamp_k(self.raw(inp), inp.n)
    }
}

/// Nearest integer in `[2, n/2]`; non-finite values go to the upper bound.
pub fn clamp_k(raw: f64, n: usize) -> usize {
    let hi = (n / 2).max(2);
    if raw.is_nan() {
        return 2;
    }
    if !raw.is_finite() || raw >= hi as f64 {
        return hi;
    }
    (raw.round() as usize).clamp(2, hi)
}

pub fn k_star_1(inp: &TheoryInputs) -> usize {
    KRule::K1.k(inp)
}

pub fn k_star_2(inp: &TheoryInputs) -> usize {
    KRule::K2.k(inp)
}

pub fn k_star_3(inp: &TheoryInputs) -> usize {
    KRule::K3.k(inp)
}

pub fn k_star_4(inp: &TheoryInputs) -> usize {
    KRule::K4.k(inp)
}

/// Rule of the earlier two-scale literature: `K*2` without `E eps^4`.
pub fn k_star_2_classic(inp: &TheoryInputs) -> usize {
    let inp = TheoryInputs { m4_eps: 0.0, ..*inp };
    KRule::K2.k(&inp)
}

/// Closed-form leading-order MSE expressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MseFormula {
    /// Two-term MSE of the two-scale `sigma^2` estimator at a given `K`.
    TsrvAtK(f64),
    /// Two-scale `sigma^2` at `K*1`: `2^{4/3} 3^{1/3} m2^{2/3} s^{8/3} T^{-2/3} + 3 kappa s^4 / T`.
    TsrvOptimal,
    /// Bias-corrected `sigma^2` at `K*2`: `2^{4/3} 3^{1/3} (m4 + m2^2)^{1/3} s^{8/3} n^{-1/3} T^{-2/3}`.
    TsrvUnbiasedOptimal,
    /// Two-scale `kappa` at `K*3`: `4 (5/3)^{3/5} d4^{6/5} s^{-24/5} T^{-2/5}`.
    KappaOptimal,
    /// Bias-corrected `kappa` at `K*4`; the objective of `K*4` at its minimiser,
    /// `(5/2) (64/5)^{2/5} (4/27)^{3/5} e^{3/5} s^{-24/5} n^{-3/5} T^{-2/5}`.
    KappaUnbiasedOptimal,
}

impl FromStr for MseFormula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsrv-optimal" => Ok(MseFormula::TsrvOptimal),
            "tsrv-unbiased-optimal" => Ok(MseFormula::TsrvUnbiasedOptimal),
            "kappa-optimal" => Ok(MseFormula::KappaOptimal),
            "kappa-unbiased-optimal" => Ok(MseFormula::KappaUnbiasedOptimal),
            other => {
                if let Some(k) = other.strip_prefix("tsrv-at-") {
                    let k: f64 = k.parse().map_err(|_| Error::UnknownEstimator(other.to_string()))?;
                    return Ok(MseFormula::TsrvAtK(k));
                }
                Err(Error::UnknownEstimator(other.to_string()))
            }
        }
    }
}

pub fn theoretical_mse(formula: MseFormula, inp: &TheoryInputs) -> Result<f64> {
    inp.validate()?;
    let n = inp.n as f64;
    let t = inp.t_days;
    let s2 = inp.sigma2;
    let s4 = s2 * s2;
    let sigma_83 = s2.powf(4.0 / 3.0);
    let sigma_m245 = s2.powf(-12.0 / 5.0);
    let c_sigma = 2f64.powf(4.0 / 3.0) * 3f64.cbrt();
    Ok(match formula {
        MseFormula::TsrvAtK(k) => {
            if !(k.is_finite() && k >= 1.0) {
                return Err(Error::invalid("K", format!("must be >= 1, got {k}")));
            }
            KRule::K1.objective(inp, k)
        }
        MseFormula::TsrvOptimal => {
            c_sigma * inp.m2_eps.powf(2.0 / 3.0) * sigma_83 * t.powf(-2.0 / 3.0) + 3.0 * inp.kappa * s4 / t
        }
        MseFormula::TsrvUnbiasedOptimal => {
            c_sigma * (inp.m4_eps + inp.m2_eps * inp.m2_eps).cbrt() * sigma_83 * n.powf(-1.0 / 3.0) * t.powf(-2.0 / 3.0)
        }
        MseFormula::KappaOptimal => {
            4.0 * (5.0f64 / 3.0).powf(0.6) * inp.m4_diff.powf(1.2) * sigma_m245 * t.powf(-0.4)
        }
        MseFormula::KappaUnbiasedOptimal => {
            2.5 * (64.0f64 / 5.0).powf(0.4) * (4.0f64 / 27.0).powf(0.6) * inp.e_eps.powf(0.6) * sigma_m245
                * n.powf(-0.6)
                * t.powf(-0.4)
        }
    })
}

/// Which plug-in chain to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    V1,
    V2,
    V3,
}

impl Variant {
    pub fn index(self) -> u8 {
        match self {
            Variant::V1 => 1,
            Variant::V2 => 2,
            Variant::V3 => 3,
        }
    }
}

impl TryFrom<u8> for Variant {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Variant::V1),
            2 => Ok(Variant::V2),
            3 => Ok(Variant::V3),
            _ => Err(Error::invalid("variant", format!("expected 1, 2 or 3, got {v}"))),
        }
    }
}

/// Label of one plug-in stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    SigmaPrime(Variant),
    SigmaDoublePrime(Variant),
    Kappa(Variant),
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::SigmaPrime(v) => write!(f, "sigma{}'", v.index()),
            Stage::SigmaDoublePrime(v) => write!(f, "sigma{}''", v.index()),
            Stage::Kappa(v) => write!(f, "kappa{}", v.index()),
        }
    }
}

/// One executed stage. For sigma stages `value` is the variance estimate
/// `sigma^2` exactly as computed (possibly negative); for kappa stages it is `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub k: usize,
    pub value: f64,
    /// The volatility that fed this stage's `K*` rule was floored.
    pub clamped: bool,
}

impl StageRecord {
    /// `sqrt(value)` for a sigma stage with a positive variance.
    pub fn volatility(&self) -> Option<f64> {
        match self.stage {
            Stage::Kappa(_) => None,
            _ if self.value > 0.0 => Some(self.value.sqrt()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginTrace {
    pub stages: Vec<StageRecord>,
    pub noise_moments: NoiseMoments,
}

impl PluginTrace {
    pub fn get(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn last(&self) -> &StageRecord {
        self.stages.last().expect("a plug-in trace always has stages")
    }
}

/// Knobs of the plug-in procedures beyond the starting volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluginConfig {
    pub sigma0: f64,
    /// Use `K*2` without the `E eps^4` term.
    #[serde(default)]
    pub classic_k2: bool,
}

impl PluginConfig {
    pub fn new(sigma0: f64) -> Self {
        PluginConfig { sigma0, classic_k2: false }
    }
}

impl Default for PluginConfig {
    fn default() -> Self {
        PluginConfig::new(DEFAULT_SIGMA0)
    }
}

fn sigma_rule_k(series: &IncrementSeries, m: &NoiseMoments, sigma2: f64, variant: Variant, classic: bool) -> Result<usize> {
    let inp = TheoryInputs::from_moments(series.n(), series.t_days(), sigma2, 0.0, m)?;
    Ok(match variant {
        Variant::V1 | Variant::V2 => k_star_1(&inp),
        Variant::V3 if classic => k_star_2_classic(&inp),
        Variant::V3 => k_star_2(&inp),
    })
}

fn sigma_estimate(series: &IncrementSeries, k: usize, variant: Variant) -> Result<f64> {
    match variant {
        Variant::V1 => tsrv_sigma2(series, k),
        Variant::V2 | Variant::V3 => tsrv_sigma2_unbiased(series, k),
    }
}

/// Two-stage plug-in for `sigma`.
///
/// Stage one picks `K` from the noise moments and `sigma0`, stage two
/// recomputes `K` with the stage-one estimate. Variant 1 uses the two-scale
/// estimator with `K*1`, variant 2 the bias-corrected one with `K*1` and
/// variant 3 the bias-corrected one with `K*2`. A non-positive stage-one
/// variance is floored before it enters `K*`.
pub fn plugin_sigma(series: &IncrementSeries, sigma0: f64, variant: Variant) -> Result<PluginTrace> {
    plugin_sigma_with(series, &PluginConfig::new(sigma0), variant)
}

pub fn plugin_sigma_with(series: &IncrementSeries, config: &PluginConfig, variant: Variant) -> Result<PluginTrace> {
    let sigma0 = config.sigma0;
    if !(sigma0.is_finite() && sigma0 > 0.0) {
        return Err(Error::invalid("sigma0", format!("must be finite and > 0, got {sigma0}")));
    }
    if series.n() < 4 {
        return Err(Error::TooFewObservations { needed: 4, got: series.n() });
    }
    let m = estimate_noise_moments(series)?;

    let k1 = sigma_rule_k(series, &m, sigma0 * sigma0, variant, config.classic_k2)?;
    let first = sigma_estimate(series, k1, variant)?;

    let clamped = first <= 0.0;
    let feed = if clamped { MOMENT_FLOOR } else { first };
    let k2 = sigma_rule_k(series, &m, feed, variant, config.classic_k2)?;
    let second = sigma_estimate(series, k2, variant)?;

    Ok(PluginTrace {
        stages: vec![
            StageRecord { stage: Stage::SigmaPrime(variant), k: k1, value: first, clamped: false },
            StageRecord { stage: Stage::SigmaDoublePrime(variant), k: k2, value: second, clamped },
        ],
        noise_moments: m,
    })
}

/// Appends a kappa stage to a finished variant-3 sigma trace.
///
/// Variant 1 uses the two-scale kappa estimator with `K*3`, variant 2 the
/// bias-corrected one with the same `K`, variant 3 the bias-corrected one with
/// `K*4`. All use `sigma''_3` both as plug-in and inside the `K*` rule.
pub fn plugin_kappa_from_sigma(series: &IncrementSeries, sigma_trace: &PluginTrace, variant: Variant) -> Result<PluginTrace> {
    let sigma2 = sigma_trace
        .get(Stage::SigmaDoublePrime(Variant::V3))
        .ok_or_else(|| Error::invalid("sigma_trace", "needs the sigma3'' stage"))?
        .value;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::NonPositivePlugin(sigma2));
    }
    let m = sigma_trace.noise_moments;
    let inp = TheoryInputs::from_moments(series.n(), series.t_days(), sigma2, 0.0, &m)?;
    let (k, value) = match variant {
        Variant::V1 => {
            let k = k_star_3(&inp);
            (k, ts_kappa(series, k, sigma2)?)
        }
        Variant::V2 => {
            let k = k_star_3(&inp);
            (k, ts_kappa_unbiased(series, k, sigma2)?)
        }
        Variant::V3 => {
            let k = k_star_4(&inp);
            (k, ts_kappa_unbiased(series, k, sigma2)?)
        }
    };
    let mut trace = sigma_trace.clone();
    trace.stages.push(StageRecord { stage: Stage::Kappa(variant), k, value, clamped: false });
    Ok(trace)
}

/// Runs the variant-3 sigma chain, then the requested kappa stage.
pub fn plugin_kappa(series: &IncrementSeries, sigma0: f64, variant: Variant) -> Result<PluginTrace> {
    plugin_kappa_with(series, &PluginConfig::new(sigma0), variant)
}

pub fn plugin_kappa_with(series: &IncrementSeries, config: &PluginConfig, variant: Variant) -> Result<PluginTrace> {
    let sigma = plugin_sigma_with(series, config, Variant::V3)?;
    plugin_kappa_from_sigma(series, &sigma, variant)
}

fn as_volatility(sigma2: f64) -> Result<f64> {
    if sigma2 > 0.0 {
        Ok(sigma2.sqrt())
    } else {
        Err(Error::Degenerate(format!("variance estimate {sigma2:e} is not positive")))
    }
}

/// Runs a named, data-driven estimator on one series.
///
/// Sigma estimators report the volatility `sigma`; `sigma1`, `sigma2` and
/// `sigma3` are the double-prime stages of their chains.
pub fn run_estimator(series: &IncrementSeries, id: EstimatorId, config: &PluginConfig) -> Result<EstimateReport> {
    let noise_moments = estimate_noise_moments(series)?;
    let report = |value: f64, k_used: usize, sigma_plugin: Option<f64>| EstimateReport {
        estimator_id: id,
        value,
        k_used,
        sigma_plugin,
        noise_moments,
        scheme: *series.scheme(),
    };
    let from_sigma_trace = |variant: Variant, stage: Stage| -> Result<EstimateReport> {
        let trace = plugin_sigma_with(series, config, variant)?;
        let rec = trace.get(stage).expect("stage present");
        Ok(report(as_volatility(rec.value)?, rec.k, None))
    };
    match id {
        EstimatorId::MmeSigma => Ok(report(as_volatility(mme_sigma2(series)?)?, 1, None)),
        EstimatorId::MmeKappa => Ok(report(mme_kappa(series)?, 1, None)),
        EstimatorId::Sigma1Prime => from_sigma_trace(Variant::V1, Stage::SigmaPrime(Variant::V1)),
        EstimatorId::Sigma1 => from_sigma_trace(Variant::V1, Stage::SigmaDoublePrime(Variant::V1)),
        EstimatorId::Sigma2Prime => from_sigma_trace(Variant::V2, Stage::SigmaPrime(Variant::V2)),
        EstimatorId::Sigma2 => from_sigma_trace(Variant::V2, Stage::SigmaDoublePrime(Variant::V2)),
        EstimatorId::Sigma3Prime => from_sigma_trace(Variant::V3, Stage::SigmaPrime(Variant::V3)),
        EstimatorId::Sigma3 => from_sigma_trace(Variant::V3, Stage::SigmaDoublePrime(Variant::V3)),
        EstimatorId::Kappa1 | EstimatorId::Kappa2 | EstimatorId::Kappa3 => {
            let variant = match id {
                EstimatorId::Kappa1 => Variant::V1,
                EstimatorId::Kappa2 => Variant::V2,
                _ => Variant::V3,
            };
            let trace = plugin_kappa_with(series, config, variant)?;
            let sigma2 = trace.get(Stage::SigmaDoublePrime(Variant::V3)).expect("sigma3'' stage").value;
            let last = trace.last();
            Ok(report(last.value, last.k, Some(sigma2.sqrt())))
        }
        EstimatorId::OracleSigmaK2 | EstimatorId::OracleKappaK4 => Err(Error::invalid(
            "estimator",
            format!("`{id}` needs the true model parameters and only runs in Monte Carlo"),
        )),
    }
}

/// Oracle estimators: `K` (and for kappa the volatility plug-in) use the true
/// parameters. Returns `sigma` for [`EstimatorId::OracleSigmaK2`] and `kappa`
/// for [`EstimatorId::OracleKappaK4`].
pub fn run_oracle(series: &IncrementSeries, id: EstimatorId, model: &ModelParams, noise: &NoiseSpec) -> Result<f64> {
    let inp = TheoryInputs::for_model(series.n(), series.t_days(), model, noise)?;
    match id {
        EstimatorId::OracleSigmaK2 => as_volatility(tsrv_sigma2_unbiased(series, k_star_2(&inp))?),
        EstimatorId::OracleKappaK4 => ts_kappa_unbiased(series, k_star_4(&inp), inp.sigma2),
        other => Err(Error::invalid("estimator", format!("`{other}` is not an oracle estimator"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_inputs() -> TheoryInputs {
        TheoryInputs::gaussian(98_280, 252.0, 0.02, 0.3, 0.005).unwrap()
    }

    fn brute_force_argmin(rule: KRule, inp: &TheoryInputs) -> usize {
        (2..=inp.n / 2)
            .min_by(|&a, &b| rule.objective(inp, a as f64).total_cmp(&rule.objective(inp, b as f64)))
            .unwrap()
    }

    #[test]
    fn reference_design_k_values() {
        let inp = reference_inputs();
        assert!((KRule::K1.raw(&inp) - 705.0).abs() < 1.0);
        assert!((KRule::K2.raw(&inp) - 24.25).abs() < 0.01);
        assert!((KRule::K4.raw(&inp) - 22.88).abs() < 0.01);
        assert_eq!(k_star_1(&inp), 705);
        assert_eq!(k_star_2(&inp), 24);
        assert_eq!(k_star_4(&inp), 23);
        for rule in KRule::ALL {
            let k = rule.k(&inp);
            assert!(k.abs_diff(brute_force_argmin(rule, &inp)) <= 1, "{rule:?}");
        }
    }

    #[test]
    fn degenerate_moments_clamp_to_two() {
        let inp = TheoryInputs { m2_eps: 0.0, m4_eps: 0.0, m4_diff: 0.0, e_eps: 0.0, ..reference_inputs() };
        for rule in KRule::ALL {
            assert_eq!(rule.k(&inp), 2);
        }
    }

    #[test]
    fn unit_ratio_clamps_to_half_n() {
        let mut inp = reference_inputs();
        inp.m2_eps = (inp.t_days * inp.t_days * inp.sigma2 * inp.sigma2 / 6.0).sqrt();
        assert!((KRule::K1.raw(&inp) - inp.n as f64).abs() < 1e-6 * inp.n as f64);
        assert_eq!(k_star_1(&inp), inp.n / 2);
    }

    #[test]
    fn homogeneity() {
        let inp = reference_inputs();
        let doubled_t = TheoryInputs { t_days: 2.0 * inp.t_days, ..inp };
        let r = KRule::K2.raw(&doubled_t) / KRule::K2.raw(&inp);
        assert!((r - 2f64.powf(-2.0 / 3.0)).abs() < 1e-12);

        let s = 1.7;
        let scaled = TheoryInputs { sigma2: inp.sigma2 * s * s, ..inp };
        let r = KRule::K3.raw(&scaled) / KRule::K3.raw(&inp);
        assert!((r - s.powf(-8.0 / 5.0)).abs() < 1e-12);

        let bigger = TheoryInputs { n: 32 * inp.n, ..inp };
        let r = KRule::K4.raw(&bigger) / KRule::K4.raw(&inp);
        assert!((r - 16.0).abs() < 1e-9);
    }

    #[test]
    fn classic_k2_drops_quartic_term() {
        let inp = reference_inputs();
        // m4 + m2^2 = 4 rho^4 vs m2^2 = rho^4
        let ratio = KRule::K2.raw(&inp) / KRule::K2.raw(&TheoryInputs { m4_eps: 0.0, ..inp });
        assert!((ratio - 4f64.cbrt()).abs() < 1e-12);
        assert!(k_star_2_classic(&inp) < k_star_2(&inp));
    }

    #[test]
    fn tsrv_mse_terms_are_two_to_one_at_optimum() {
        let inp = reference_inputs();
        let k = KRule::K1.raw(&inp);
        let n = inp.n as f64;
        let increasing = 4.0 * inp.sigma2 * inp.sigma2 * k / (3.0 * n);
        let decreasing = KRule::K1.objective(&inp, k) - increasing;
        assert!((increasing / decreasing - 2.0).abs() < 1e-9);
        let closed = theoretical_mse(MseFormula::TsrvOptimal, &inp).unwrap() - 3.0 * inp.kappa * inp.sigma2.powi(2) / inp.t_days;
        assert!((closed / KRule::K1.objective(&inp, k) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn optimal_mse_formulas_match_objectives() {
        let inp = reference_inputs();
        for (formula, rule) in [
            (MseFormula::TsrvUnbiasedOptimal, KRule::K2),
            (MseFormula::KappaOptimal, KRule::K3),
            (MseFormula::KappaUnbiasedOptimal, KRule::K4),
        ] {
            let closed = theoretical_mse(formula, &inp).unwrap();
            let direct = rule.objective(&inp, rule.raw(&inp));
            assert!((closed / direct - 1.0).abs() < 1e-9, "{formula:?}: {closed} vs {direct}");
        }
    }

    #[test]
    fn noise_free_mse_floor() {
        let inp = TheoryInputs { m2_eps: 0.0, ..reference_inputs() };
        let v = theoretical_mse(MseFormula::TsrvOptimal, &inp).unwrap();
        assert_eq!(v, 3.0 * inp.kappa * inp.sigma2 * inp.sigma2 / inp.t_days);
        assert!("no-such-formula".parse::<MseFormula>().is_err());
        assert_eq!("tsrv-at-10".parse::<MseFormula>().unwrap(), MseFormula::TsrvAtK(10.0));
    }

    #[test]
    fn clamp_rules() {
        assert_eq!(clamp_k(0.0, 100), 2);
        assert_eq!(clamp_k(f64::NAN, 100), 2);
        assert_eq!(clamp_k(f64::INFINITY, 100), 50);
        assert_eq!(clamp_k(10.49, 100), 10);
        assert_eq!(clamp_k(10.5, 100), 11);
        assert_eq!(clamp_k(1e9, 101), 50);
    }

    #[test]
    fn theory_inputs_validation() {
        assert!(TheoryInputs::gaussian(3, 1.0, 0.02, 0.3, 0.005).is_err());
        assert!(TheoryInputs::gaussian(100, 1.0, 0.0, 0.3, 0.005).is_err());
    }

    #[test]
    fn plugin_rejects_bad_sigma0() {
        let s = IncrementSeries::from_values(vec![0.01, -0.02, 0.015, 0.003, -0.008, 0.02], 1.0).unwrap();
        assert!(plugin_sigma(&s, 0.0, Variant::V1).is_err());
        assert!(plugin_sigma(&s, -1.0, Variant::V3).is_err());
        assert!(Variant::try_from(4).is_err());
    }

    #[test]
    fn stage_labels() {
        assert_eq!(Stage::SigmaDoublePrime(Variant::V3).to_string(), "sigma3''");
        assert_eq!(Stage::Kappa(Variant::V1).to_string(), "kappa1");
    }
}
