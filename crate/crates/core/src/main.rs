use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use twoscale::data_io::{
    csv_string, empirical_csv, empirical_report, fmt_f64, increments_csv, load_increments, load_ticks, synthetic_ticks,
    ticks_csv, write_atomic, TickFormat,
};
use twoscale::estimators::EstimatorId;
use twoscale::mc::{monthly_horizons, DAYS_PER_MONTH, rate_regression, run_table, MCConfig, MCSummary, RateRegressionResult};
use twoscale::sim::{simulate_increments, DEFAULT_DAY_SECONDS};
use twoscale::tuning::{run_estimator, PluginConfig, DEFAULT_SIGMA0};
use twoscale::{Clock, Error, Frequency, IncrementSeries, ModelParams, NoiseSpec, Result, SamplingScheme};

#[derive(Parser)]
#[command(name = "twoscale", version, about = "Simulate noisy subordinated Brownian motion and run two-scale estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an increment path and write it as `index,increment` CSV.
    Simulate(SimulateArgs),
    /// Run one estimator on an increments CSV and print a JSON report.
    Estimate(EstimateArgs),
    /// Monte Carlo table of means, SDs and MSEs per frequency and estimator.
    McTable(McTableArgs),
    /// Log-variance on log-horizon regressions from Monte Carlo variances.
    McRates(McRatesArgs),
    /// Multi-frequency report on tick data.
    Empirical(EmpiricalArgs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SimulateConfig {
    model: ModelParams,
    noise: NoiseSpec,
    t_days: f64,
    freq: Frequency,
    seed: u64,
    #[serde(default = "default_day")]
    day_length_seconds: f64,
}

fn default_day() -> f64 {
    DEFAULT_DAY_SECONDS
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            model: ModelParams::new(0.02, 0.3, Clock::Gamma).expect("valid default model"),
            noise: NoiseSpec::new(0.005).expect("valid default noise"),
            t_days: 252.0,
            freq: Frequency::from_seconds(300.0).expect("valid default frequency"),
            seed: 0,
            day_length_seconds: DEFAULT_DAY_SECONDS,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file with a full simulation config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Subordinator family: `vg` (Gamma clock) or `nig` (inverse Gaussian clock).
    #[arg(long)]
    model: Option<Clock>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Drift of the Brownian motion in business time.
    #[arg(long)]
    theta: Option<f64>,
    /// Calendar-time drift.
    #[arg(long)]
    b: Option<f64>,
    /// Standard deviation of the white observation noise.
    #[arg(long)]
    rho: Option<f64>,
    /// Horizon in trading days.
    #[arg(long)]
    t_days: Option<f64>,
    /// Sampling interval, e.g. 5s, 1min, 1h.
    #[arg(long)]
    freq: Option<Frequency>,
    #[arg(long)]
    seed: Option<u64>,
    /// Length of a trading day in seconds.
    #[arg(long)]
    day_length: Option<f64>,
    /// Increments CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the path as regular ticks (`timestamp,price,date`), one session per day.
    #[arg(long)]
    ticks_out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Increments CSV with an `increment` column.
    #[arg(long)]
    input: PathBuf,
    /// One of: mme-sigma, mme-kappa, sigma1-prime, sigma1, sigma2-prime, sigma2,
    /// sigma3-prime, sigma3, kappa1, kappa2, kappa3.
    #[arg(long)]
    estimator: EstimatorId,
    /// Starting volatility of the plug-in procedures.
    #[arg(long, default_value_t = DEFAULT_SIGMA0)]
    sigma0: f64,
    /// Sampling interval of the input; sets T = n * freq.
    #[arg(long)]
    freq: Option<Frequency>,
    /// Horizon in days; overrides the value implied by --freq.
    #[arg(long)]
    t_days: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DAY_SECONDS)]
    day_length: f64,
    /// Use the K*2 rule without the fourth noise moment.
    #[arg(long)]
    classic_k2: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McCommon {
    /// JSON Monte Carlo config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replications per cell.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated estimator ids.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<EstimatorId>>,
    /// Comma-separated sampling intervals.
    #[arg(long, value_delimiter = ',')]
    freqs: Option<Vec<Frequency>>,
    #[arg(long)]
    sigma0: Option<f64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// 1000 replications unless --reps is given.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args)]
struct McTableArgs {
    #[command(flatten)]
    common: McCommon,
    /// Horizon in days.
    #[arg(long)]
    t_days: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct McRatesArgs {
    #[command(flatten)]
    common: McCommon,
    /// First horizon in months of 21 days.
    #[arg(long)]
    from_months: Option<u32>,
    /// Last horizon in months.
    #[arg(long)]
    to_months: Option<u32>,
    /// Regression summary CSV.
    #[arg(long)]
    out: PathBuf,
    /// (log T, log variance) points CSV.
    #[arg(long)]
    points_out: Option<PathBuf>,
}

#[derive(Args)]
struct EmpiricalArgs {
    /// Tick CSV with `timestamp,price[,date]`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "20min,10min,5min,1min,30s,10s,5s")]
    freqs: Vec<Frequency>,
    #[arg(long, default_value_t = DEFAULT_SIGMA0)]
    sigma0: f64,
    #[arg(long, default_value_t = DEFAULT_DAY_SECONDS)]
    day_length: f64,
    /// Session open for ISO-8601 timestamps, HH:MM[:SS].
    #[arg(long, default_value = "09:30")]
    open: String,
    /// Report CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Horizon settings stored next to the Monte Carlo config of `mc-rates`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RatesConfig {
    #[serde(flatten)]
    mc: MCConfig,
    #[serde(default = "default_from")]
    from_months: u32,
    #[serde(default = "default_to")]
    to_months: u32,
    /// Per-estimator fit ranges in months, e.g. `{"kappa3": [12, 24]}`.
    #[serde(default)]
    fit_months: BTreeMap<EstimatorId, [u32; 2]>,
}

fn default_from() -> u32 {
    2
}

fn default_to() -> u32 {
    24
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_sidecar(out: &Path, command: &str, config: serde_json::Value, extra: serde_json::Value) -> Result<()> {
    let doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "results": extra,
    });
    write_atomic(sidecar_path(out), serde_json::to_string_pretty(&doc)?.as_bytes())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => read_json::<SimulateConfig>(p)?,
        None => SimulateConfig::default(),
    };
    if let Some(c) = args.model {
        cfg.model.clock = c;
    }
    if let Some(v) = args.sigma {
        cfg.model.sigma = v;
    }
    if let Some(v) = args.kappa {
        cfg.model.kappa = v;
    }
    if let Some(v) = args.theta {
        cfg.model.theta = v;
    }
    if let Some(v) = args.b {
        cfg.model.b = v;
    }
    if let Some(v) = args.rho {
        cfg.noise.rho = v;
    }
    if let Some(v) = args.t_days {
        cfg.t_days = v;
    }
    if let Some(v) = args.freq {
        cfg.freq = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.day_length {
        cfg.day_length_seconds = v;
    }
    cfg.model.validate()?;
    let noise = NoiseSpec::new(cfg.noise.rho)?;
    let scheme = SamplingScheme::from_frequency(cfg.t_days, cfg.freq, cfg.day_length_seconds)?;
    let series = simulate_increments(&cfg.model, &scheme, &noise, cfg.seed)?;
    write_atomic(&args.out, increments_csv(&series)?.as_bytes())?;
    if let Some(p) = &args.ticks_out {
        write_atomic(p, ticks_csv(&synthetic_ticks(&series, 100.0)?)?.as_bytes())?;
    }
    write_sidecar(&args.out, "simulate", serde_json::to_value(&cfg)?, json!({ "n": scheme.n(), "delta_days": scheme.delta() }))
}

fn estimate(args: EstimateArgs) -> Result<()> {
    if args.estimator.is_oracle() {
        return Err(Error::UnknownEstimator(format!("{} (oracle estimators only run in Monte Carlo)", args.estimator)));
    }
    let values = load_increments(&args.input)?;
    let n = values.len();
    let t_days = match (args.t_days, args.freq) {
        (Some(t), _) => t,
        // n * seconds / day keeps integer products exact
        (None, Some(f)) => n as f64 * f.seconds() / args.day_length,
        (None, None) => return Err(invalid_flag("either --freq or --t-days is required")),
    };
    let scheme = SamplingScheme::with_day_length(n, t_days, args.day_length)?;
    let series = IncrementSeries::new(values, scheme, true)?;
    let plugin = PluginConfig { sigma0: args.sigma0, classic_k2: args.classic_k2 };
    let report = run_estimator(&series, args.estimator, &plugin)?;
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => to_stdout(&format!("{text}\n")),
    }
}

/// A closed pipe on stdout is not an error.
fn to_stdout(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn invalid_flag(reason: &str) -> Error {
    Error::invalid("arguments", reason)
}

fn resolve_mc(common: &McCommon, base: Option<MCConfig>) -> MCConfig {
    let mut cfg = base.unwrap_or_else(|| {
        MCConfig::reference_design(
            vec![Frequency::from_seconds(300.0).expect("valid frequency")],
            200,
            vec![EstimatorId::Sigma1Prime, EstimatorId::Sigma2Prime, EstimatorId::Sigma3],
        )
    });
    if common.full_scale {
        cfg.replications = 1000;
    }
    if let Some(r) = common.reps {
        cfg.replications = r;
    }
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    if let Some(e) = &common.estimators {
        cfg.estimators = e.clone();
    }
    if let Some(f) = &common.freqs {
        cfg.frequencies = f.clone();
    }
    if let Some(s) = common.sigma0 {
        cfg.sigma0 = s;
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    cfg
}

fn table_csv(summary: &MCSummary) -> Result<String> {
    csv_string(
        &["frequency", "estimator", "truth", "mean", "sd", "mse", "replications", "failures", "flagged"],
        summary.cells.iter().map(|c| {
            vec![
                c.frequency.label(),
                c.estimator.to_string(),
                fmt_f64(c.truth),
                fmt_f64(c.mean),
                fmt_f64(c.sd),
                fmt_f64(c.mse),
                c.replications.to_string(),
                c.failures.to_string(),
                c.flagged.to_string(),
            ]
        }),
    )
}

fn mc_table(args: McTableArgs) -> Result<()> {
    let base = args.common.config.as_deref().map(read_json::<MCConfig>).transpose()?;
    let mut cfg = resolve_mc(&args.common, base);
    if let Some(t) = args.t_days {
        cfg.t_days = t;
    }
    let summary = run_table(&cfg)?;
    write_atomic(&args.out, table_csv(&summary)?.as_bytes())?;
    let cfg_echo = MCConfig { threads: None, ..cfg };
    write_sidecar(&args.out, "mc-table", serde_json::to_value(&cfg_echo)?, serde_json::to_value(&summary.cells)?)
}

fn rates_csv(res: &RateRegressionResult, fits: &BTreeMap<EstimatorId, [u32; 2]>) -> Result<String> {
    let mut rows = Vec::new();
    for s in &res.series {
        let fit = match fits.get(&s.estimator) {
            Some([lo, hi]) => s.fit_range(*lo as f64 * DAYS_PER_MONTH, *hi as f64 * DAYS_PER_MONTH).ok(),
            None => s.fit,
        };
        let (slope, hw, icpt, r2, pts) =
            fit.map_or((f64::NAN, f64::NAN, f64::NAN, f64::NAN, 0), |f| (f.slope, f.half_width, f.intercept, f.r_squared, f.points));
        rows.push(vec![
            s.frequency.label(),
            s.estimator.to_string(),
            fmt_f64(slope),
            fmt_f64(hw),
            fmt_f64(icpt),
            fmt_f64(r2),
            pts.to_string(),
            s.dropped.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" "),
        ]);
    }
    csv_string(&["frequency", "estimator", "slope", "half_width", "intercept", "r_squared", "points", "dropped_t_days"], rows)
}

fn points_csv(res: &RateRegressionResult) -> Result<String> {
    csv_string(
        &["frequency", "estimator", "t_days", "log_t", "variance", "log_variance", "replications"],
        res.series.iter().flat_map(|s| {
            s.points.iter().map(move |p| {
                vec![
                    s.frequency.label(),
                    s.estimator.to_string(),
                    fmt_f64(p.t_days),
                    fmt_f64(p.log_t),
                    fmt_f64(p.variance),
                    fmt_f64(p.log_variance),
                    p.replications.to_string(),
                ]
            })
        }),
    )
}

fn mc_rates(args: McRatesArgs) -> Result<()> {
    let base = args.common.config.as_deref().map(read_json::<RatesConfig>).transpose()?;
    let (mc, mut from, mut to, fits) = match base {
        Some(r) => (Some(r.mc), r.from_months, r.to_months, r.fit_months),
        None => (None, default_from(), default_to(), BTreeMap::new()),
    };
    let mut cfg = resolve_mc(&args.common, mc);
    if args.common.estimators.is_none() && args.common.config.is_none() {
        cfg.estimators = vec![EstimatorId::OracleSigmaK2];
        cfg.frequencies = vec![Frequency::from_seconds(60.0)?];
    }
    if let Some(v) = args.from_months {
        from = v;
    }
    if let Some(v) = args.to_months {
        to = v;
    }
    if from == 0 || to < from + 2 {
        return Err(invalid_flag("need at least three monthly horizons (0 < from, from + 2 <= to)"));
    }
    let horizons = monthly_horizons(from, to);
    let res = rate_regression(&cfg, &horizons)?;
    write_atomic(&args.out, rates_csv(&res, &fits)?.as_bytes())?;
    if let Some(p) = &args.points_out {
        write_atomic(p, points_csv(&res)?.as_bytes())?;
    }
    let echo = RatesConfig { mc: MCConfig { threads: None, ..cfg }, from_months: from, to_months: to, fit_months: fits };
    write_sidecar(&args.out, "mc-rates", serde_json::to_value(&echo)?, serde_json::to_value(&res.series)?)
}

fn empirical(args: EmpiricalArgs) -> Result<()> {
    let open = chrono::NaiveTime::parse_from_str(&args.open, "%H:%M")
        .or_else(|_| chrono::NaiveTime::parse_from_str(&args.open, "%H:%M:%S"))
        .map_err(|_| invalid_flag("--open must be HH:MM or HH:MM:SS"))?;
    let fmt = TickFormat { day_length_seconds: args.day_length, session_open: open };
    let data = load_ticks(&args.input, &fmt)?;
    let plugin = PluginConfig::new(args.sigma0);
    let rows = empirical_report(&data, &args.freqs, &plugin)?;
    let text = empirical_csv(&rows)?;
    match &args.out {
        Some(p) => {
            write_atomic(p, text.as_bytes())?;
            let cfg = json!({
                "input": args.input,
                "freqs": args.freqs,
                "sigma0": args.sigma0,
                "day_length_seconds": args.day_length,
                "open": args.open,
                "sessions": data.sessions.len(),
            });
            write_sidecar(p, "empirical", cfg, serde_json::to_value(&rows)?)
        }
        None => to_stdout(&text),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::McTable(a) => mc_table(a),
        Command::McRates(a) => mc_rates(a),
        Command::Empirical(a) => empirical(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
