//! Tick data ingestion, calendar-time resampling, the multi-frequency
//! empirical report and CSV output.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_noise_moments, mme_sigma2, ts_kappa, ts_kappa_unbiased, MOMENT_FLOOR};
use crate::sim::{Frequency, IncrementSeries, SamplingScheme, DEFAULT_DAY_SECONDS};
use crate::tuning::{k_star_4, plugin_sigma_with, PluginConfig, Stage, TheoryInputs, Variant};

/// Trades of one session; timestamps are seconds since the session open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSeries {
    pub session: String,
    pub timestamps: Vec<f64>,
    pub prices: Vec<f64>,
    pub day_length_seconds: f64,
}

impl TickSeries {
    pub fn new(session: impl Into<String>, timestamps: Vec<f64>, prices: Vec<f64>, day_length_seconds: f64) -> Result<Self> {
        if timestamps.len() != prices.len() {
            return Err(Error::TickData("timestamp and price counts differ".into()));
        }
        if timestamps.is_empty() {
            return Err(Error::TickData("session has no ticks".into()));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::TickData(format!("timestamps not strictly increasing at tick {}", i + 2)));
        }
        if let Some(i) = prices.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::TickData(format!("non-positive price at tick {}", i + 1)));
        }
        if !(day_length_seconds.is_finite() && day_length_seconds > 0.0) {
            return Err(Error::invalid("day_length_seconds", "must be finite and > 0"));
        }
        Ok(TickSeries { session: session.into(), timestamps, prices, day_length_seconds })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// All sessions of a tick file, in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickData {
    pub sessions: Vec<TickSeries>,
}

impl TickData {
    pub fn total_ticks(&self) -> usize {
        self.sessions.iter().map(TickSeries::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickFormat {
    pub day_length_seconds: f64,
    /// Wall-clock open used to convert ISO-8601 timestamps.
    pub session_open: NaiveTime,
}

impl Default for TickFormat {
    fn default() -> Self {
        TickFormat {
            day_length_seconds: DEFAULT_DAY_SECONDS,
            session_open: NaiveTime::from_hms_opt(9, 30, 0).expect("valid time"),
        }
    }
}

fn parse_timestamp(raw: &str, fmt: &TickFormat) -> Option<(f64, Option<String>)> {
    let raw = raw.trim();
    if let Ok(s) = raw.parse::<f64>() {
        return s.is_finite().then_some((s, None));
    }
    let naive = DateTime::parse_from_rfc3339(raw)
        .map(|d| d.naive_local())
        .ok()
        .or_else(|| NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S%.f").ok())
        .or_else(|| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S%.f").ok())?;
    let secs = |t: NaiveTime| t.num_seconds_from_midnight() as f64 + t.nanosecond() as f64 * 1e-9;
    Some((secs(naive.time()) - secs(fmt.session_open), Some(naive.date().to_string())))
}

/// Reads `timestamp,price[,date]` CSV data.
///
/// Timestamps are seconds since the open or ISO-8601 date-times. Rows are
/// grouped into sessions by the `date` column, or by the calendar date of
/// ISO timestamps. Within a session, rows sharing a timestamp collapse to the
/// last one. Row numbers in errors count the header as row 1.
pub fn load_ticks(path: impl AsRef<Path>, fmt: &TickFormat) -> Result<TickData> {
    let file = std::fs::File::open(path.as_ref())?;
    read_ticks(file, fmt)
}

pub fn read_ticks<R: std::io::Read>(reader: R, fmt: &TickFormat) -> Result<TickData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let ts_col = col("timestamp").ok_or_else(|| Error::TickData("missing `timestamp` column".into()))?;
    let px_col = col("price").ok_or_else(|| Error::TickData("missing `price` column".into()))?;
    let date_col = col("date");

    let mut bad_rows = Vec::new();
    let mut bad_prices = Vec::new();
    let mut rows: Vec<(usize, String, f64, f64)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let Ok(record) = record else {
            bad_rows.push(row);
            continue;
        };
        let ts = record.get(ts_col).and_then(|s| parse_timestamp(s, fmt));
        let px = record.get(px_col).and_then(|s| s.parse::<f64>().ok());
        let (Some((t, iso_date)), Some(p)) = (ts, px) else {
            bad_rows.push(row);
            continue;
        };
        if !(p.is_finite() && p > 0.0) {
            bad_prices.push(row);
            continue;
        }
        let session = date_col
            .and_then(|c| record.get(c).map(str::to_string))
            .or(iso_date)
            .unwrap_or_default();
        rows.push((row, session, t, p));
    }
    if !bad_rows.is_empty() {
        return Err(Error::TickData(format!("unparseable rows: {}", join(&bad_rows))));
    }
    if !bad_prices.is_empty() {
        return Err(Error::TickData(format!("non-positive price in rows: {}", join(&bad_prices))));
    }
    if rows.is_empty() {
        return Err(Error::TickData("no ticks".into()));
    }

    let mut sessions = Vec::new();
    let mut seen = HashSet::new();
    let mut start = 0;
    while start < rows.len() {
        let name = rows[start].1.clone();
        if !seen.insert(name.clone()) {
            return Err(Error::TickData(format!("session `{name}` resumes at row {} after another session", rows[start].0)));
        }
        let end = rows[start..].iter().position(|r| r.1 != name).map_or(rows.len(), |p| start + p);
        let mut ts: Vec<f64> = Vec::with_capacity(end - start);
        let mut px: Vec<f64> = Vec::with_capacity(end - start);
        for (row, _, t, p) in &rows[start..end] {
            match ts.last() {
                Some(&last) if *t == last => *px.last_mut().unwrap() = *p,
                Some(&last) if *t < last => {
                    return Err(Error::TickData(format!("timestamp decreases at row {row}")));
                }
                _ => {
                    ts.push(*t);
                    px.push(*p);
                }
            }
        }
        sessions.push(TickSeries::new(name, ts, px, fmt.day_length_seconds)?);
        start = end;
    }
    Ok(TickData { sessions })
}

fn join(rows: &[usize]) -> String {
    rows.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
}

/// Previous-tick log prices of one session on the grid `t_i = i delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionGrid {
    /// Log price at grid points `first_index, first_index + 1, ...`.
    pub log_levels: Vec<f64>,
    /// Leading grid points dropped because no trade preceded them.
    pub first_index: usize,
}

impl SessionGrid {
    pub fn increments(&self) -> Vec<f64> {
        self.log_levels.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Samples `log price` at `t_i = i delta` from the open up to the earlier of
/// the last trade and the session end, using the last trade at or before `t_i`.
pub fn resample_levels(ticks: &TickSeries, delta_seconds: f64) -> Result<SessionGrid> {
    if !(delta_seconds.is_finite() && delta_seconds > 0.0) {
        return Err(Error::invalid("delta", "must be finite and > 0"));
    }
    if ticks.len() < 2 {
        return Err(Error::TickData(format!("session `{}` has a single tick", ticks.session)));
    }
    let first = ticks.timestamps[0];
    let end = ticks.timestamps[ticks.len() - 1].min(ticks.day_length_seconds);
    let last_index = (end / delta_seconds + 1e-9).floor();
    let first_index = (first.max(0.0) / delta_seconds - 1e-9).ceil().max(0.0);
    if last_index - first_index < 2.0 {
        return Err(Error::TickData(format!(
            "session `{}` spans less than two intervals of {delta_seconds} s",
            ticks.session
        )));
    }
    let (first_index, last_index) = (first_index as usize, last_index as usize);
    let mut log_levels = Vec::with_capacity(last_index - first_index + 1);
    let mut j = 0;
    for i in first_index..=last_index {
        let t = i as f64 * delta_seconds;
        while j + 1 < ticks.len() && ticks.timestamps[j + 1] <= t {
            j += 1;
        }
        log_levels.push(ticks.prices[j].ln());
    }
    Ok(SessionGrid { log_levels, first_index })
}

/// Calendar-time increments of every session, concatenated without overnight returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub series: IncrementSeries,
    pub increments_per_session: Vec<usize>,
    /// Leading grid points dropped per session.
    pub dropped_leading: Vec<usize>,
}

pub fn resample_calendar(data: &TickData, freq: Frequency) -> Result<Resampled> {
    let delta_s = freq.seconds();
    let mut values = Vec::new();
    let mut per_session = Vec::new();
    let mut dropped = Vec::new();
    let mut day_len = DEFAULT_DAY_SECONDS;
    for s in &data.sessions {
        let grid = resample_levels(s, delta_s)?;
        let inc = grid.increments();
        per_session.push(inc.len());
        dropped.push(grid.first_index);
        values.extend(inc);
        day_len = s.day_length_seconds;
    }
    let n = values.len();
    let t_days = n as f64 * delta_s / day_len;
    let scheme = SamplingScheme::with_day_length(n, t_days, day_len)?;
    Ok(Resampled { series: IncrementSeries::new(values, scheme, true)?, increments_per_session: per_session, dropped_leading: dropped })
}

/// Regular ticks built from a simulated increment path, one session per day.
///
/// The path needs a whole number of steps per day. Overnight, the next
/// session opens at the previous close.
pub fn synthetic_ticks(series: &IncrementSeries, start_price: f64) -> Result<TickData> {
    let day = series.scheme().day_length_seconds();
    let per_day_f = 1.0 / series.delta();
    let per_day = per_day_f.round() as usize;
    if per_day == 0 || (per_day_f - per_day as f64).abs() > 1e-6 || !series.n().is_multiple_of(per_day) {
        return Err(Error::invalid("series", "needs a whole number of steps per day and whole days"));
    }
    let step = day / per_day as f64;
    let mut log_p = start_price.ln();
    let mut sessions = Vec::new();
    for (d, chunk) in series.values().chunks(per_day).enumerate() {
        let mut ts = Vec::with_capacity(per_day + 1);
        let mut px = Vec::with_capacity(per_day + 1);
        ts.push(0.0);
        px.push(log_p.exp());
        for (i, x) in chunk.iter().enumerate() {
            log_p += x;
            ts.push((i + 1) as f64 * step);
            px.push(log_p.exp());
        }
        sessions.push(TickSeries::new(format!("day{:04}", d + 1), ts, px, day)?);
    }
    Ok(TickData { sessions })
}

/// One row of the multi-frequency report. Failed cells are `NaN` and listed in `flags`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRow {
    pub frequency: Frequency,
    pub n: usize,
    pub t_days: f64,
    pub rho_hat: f64,
    /// Realized volatility on the full grid.
    pub sigma_naive: f64,
    /// Bias-corrected two-scale volatility after the `K*1` plug-in.
    pub sigma_bar: f64,
    pub k_sigma: usize,
    /// Two-scale kappa at `K = 1` with the naive volatility.
    pub kappa_naive: f64,
    /// Bias-corrected two-scale kappa at `K*4` with `sigma_bar`.
    pub kappa_bar: f64,
    pub k_kappa: usize,
    pub flags: Vec<String>,
}

fn empirical_row(series: &IncrementSeries, freq: Frequency, plugin: &PluginConfig) -> Result<EmpiricalRow> {
    let m = estimate_noise_moments(series)?;
    let mut flags = Vec::new();
    let mut flag = |cell: &str, e: &dyn std::fmt::Display| {
        flags.push(format!("{cell}: {e}"));
        f64::NAN
    };

    let naive_var = mme_sigma2(series)?;
    let sigma_naive = naive_var.sqrt();
    let kappa_naive = if naive_var > 0.0 {
        ts_kappa(series, 1, naive_var).unwrap_or_else(|e| flag("kappa_naive", &e))
    } else {
        flag("kappa_naive", &"zero realized variance")
    };

    let (mut sigma_bar, mut k_sigma, mut kappa_bar, mut k_kappa) = (f64::NAN, 0, f64::NAN, 0);
    match plugin_sigma_with(series, plugin, Variant::V2) {
        Ok(trace) => {
            let rec = *trace.get(Stage::SigmaDoublePrime(Variant::V2)).expect("stage present");
            k_sigma = rec.k;
            if rec.value > 0.0 {
                sigma_bar = rec.value.sqrt();
                let kappa = TheoryInputs::from_moments(series.n(), series.t_days(), rec.value, 0.0, &m)
                    .and_then(|inp| {
                        k_kappa = k_star_4(&inp);
                        ts_kappa_unbiased(series, k_kappa, rec.value)
                    });
                kappa_bar = kappa.unwrap_or_else(|e| flag("kappa_bar", &e));
            } else {
                flag("sigma_bar", &format!("non-positive variance {:e}", rec.value));
                flag("kappa_bar", &"no volatility plug-in");
            }
        }
        Err(e) => {
            flag("sigma_bar", &e);
            flag("kappa_bar", &"no volatility plug-in");
        }
    }
    if m.m4_diff <= MOMENT_FLOOR {
        flags.push("kappa_bar: noise moments vanish".into());
    }

    Ok(EmpiricalRow {
        frequency: freq,
        n: series.n(),
        t_days: series.t_days(),
        rho_hat: m.m2_eps.max(0.0).sqrt(),
        sigma_naive,
        sigma_bar,
        k_sigma,
        kappa_naive,
        kappa_bar,
        k_kappa,
        flags,
    })
}

/// Resamples at each frequency and computes the report row.
pub fn empirical_report(data: &TickData, frequencies: &[Frequency], plugin: &PluginConfig) -> Result<Vec<EmpiricalRow>> {
    frequencies
        .iter()
        .map(|&f| {
            let r = resample_calendar(data, f)?;
            empirical_row(&r.series, f, plugin)
        })
        .collect()
}

/// Full-precision decimal form used in every CSV output.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Writes `contents` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, contents: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// CSV text with a header and string rows.
pub fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `index,increment` with `index` running from 1.
pub fn increments_csv(series: &IncrementSeries) -> Result<String> {
    csv_string(
        &["index", "increment"],
        series.values().iter().enumerate().map(|(i, x)| vec![(i + 1).to_string(), fmt_f64(*x)]),
    )
}

pub fn read_increments<R: std::io::Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == "increment")
        .ok_or_else(|| Error::invalid("input", "missing `increment` column"))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v: f64 = rec
            .get(col)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::invalid("input", format!("unparseable increment on row {}", i + 2)))?;
        out.push(v);
    }
    Ok(out)
}

pub fn load_increments(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    read_increments(std::fs::File::open(path.as_ref())?)
}

/// `timestamp,price,date` with timestamps in seconds since the open.
pub fn ticks_csv(data: &TickData) -> Result<String> {
    csv_string(
        &["timestamp", "price", "date"],
        data.sessions.iter().flat_map(|s| {
            s.timestamps
                .iter()
                .zip(&s.prices)
                .map(move |(t, p)| vec![fmt_f64(*t), fmt_f64(*p), s.session.clone()])
        }),
    )
}

pub fn empirical_csv(rows: &[EmpiricalRow]) -> Result<String> {
    csv_string(
        &["frequency", "n", "rho_hat", "sigma_n1", "sigma_bar", "K_sigma", "kappa_n1", "kappa_bar", "K_kappa", "flags"],
        rows.iter().map(|r| {
            vec![
                r.frequency.label(),
                r.n.to_string(),
                fmt_f64(r.rho_hat),
                fmt_f64(r.sigma_naive),
                fmt_f64(r.sigma_bar),
                r.k_sigma.to_string(),
                fmt_f64(r.kappa_naive),
                fmt_f64(r.kappa_bar),
                r.k_kappa.to_string(),
                r.flags.join("; "),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ticks(ts: &[f64], px: &[f64]) -> TickSeries {
        TickSeries::new("s", ts.to_vec(), px.to_vec(), DEFAULT_DAY_SECONDS).unwrap()
    }

    fn read(text: &str) -> Result<TickData> {
        read_ticks(text.as_bytes(), &TickFormat::default())
    }

    #[test]
    fn three_row_file() {
        let d = read("timestamp,price\n0,100\n10,101\n20,102\n").unwrap();
        assert_eq!(d.sessions.len(), 1);
        assert_eq!(d.sessions[0].len(), 3);
    }

    #[test]
    fn duplicates_keep_last_trade() {
        let d = read("timestamp,price\n0,100\n10,101\n10,103\n20,102\n").unwrap();
        assert_eq!(d.sessions[0].prices, vec![100.0, 103.0, 102.0]);
    }

    #[test]
    fn bad_rows_are_named() {
        let e = read("timestamp,price\n0,100\n10,-1\n20,102\n").unwrap_err().to_string();
        assert!(e.contains("rows: 3"), "{e}");
        let e = read("timestamp,price\n0,100\nabc,1\n20,x\n").unwrap_err().to_string();
        assert!(e.contains("3, 4"), "{e}");
        let e = read("timestamp,price\n0,100\n20,101\n10,102\n").unwrap_err().to_string();
        assert!(e.contains("row 4"), "{e}");
    }

    #[test]
    fn iso_timestamps_and_sessions() {
        let d = read(
            "timestamp,price\n2005-01-03T09:30:00,10\n2005-01-03T09:30:05.5,11\n2005-01-04 09:30:01,12\n2005-01-04 09:31:00,13\n",
        )
        .unwrap();
        assert_eq!(d.sessions.len(), 2);
        assert_eq!(d.sessions[0].timestamps, vec![0.0, 5.5]);
        assert_eq!(d.sessions[1].session, "2005-01-04");
        assert_eq!(d.sessions[1].timestamps, vec![1.0, 60.0]);

        let d = read("timestamp,price,date\n0,1,a\n5,2,a\n0,3,b\n").unwrap();
        assert_eq!(d.sessions.len(), 2);
        assert!(read("timestamp,price,date\n0,1,a\n0,3,b\n5,2,a\n").is_err());
    }

    #[test]
    fn aligned_resampling() {
        let g = resample_levels(&ticks(&[0.0, 10.0, 20.0], &[100.0, 101.0, 102.0]), 10.0).unwrap();
        let inc = g.increments();
        assert_eq!(inc, vec![(101f64).ln() - (100f64).ln(), (102f64).ln() - (101f64).ln()]);
    }

    #[test]
    fn previous_tick_rule() {
        let g = resample_levels(&ticks(&[0.0, 7.0, 20.0], &[100.0, 101.0, 102.0]), 10.0).unwrap();
        assert_eq!(g.log_levels, vec![100f64.ln(), 101f64.ln(), 102f64.ln()]);
    }

    #[test]
    fn leading_points_without_trades_are_dropped() {
        let g = resample_levels(&ticks(&[3.0, 12.0, 25.0, 31.0], &[1.0, 2.0, 3.0, 4.0]), 10.0).unwrap();
        assert_eq!(g.first_index, 1);
        assert_eq!(g.log_levels.len(), 3);
    }

    #[test]
    fn single_tick_is_an_error() {
        assert!(resample_levels(&ticks(&[0.0], &[1.0]), 10.0).is_err());
        assert!(resample_levels(&ticks(&[0.0, 15.0], &[1.0, 2.0]), 10.0).is_err());
    }

    #[test]
    fn resampling_regular_grid_is_identity() {
        let xs = vec![0.01, -0.02, 0.005, 0.0, 0.013, -0.004];
        let s = IncrementSeries::new(xs.clone(), SamplingScheme::with_day_length(6, 2.0, 30.0).unwrap(), false).unwrap();
        let d = synthetic_ticks(&s, 50.0).unwrap();
        assert_eq!(d.sessions.len(), 2);
        let r = resample_calendar(&d, Frequency::from_seconds(10.0).unwrap()).unwrap();
        assert_eq!(r.series.t_days(), 2.0);
        for (a, b) in r.series.values().iter().zip(&xs) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_prices_flag_kappa() {
        let ts: Vec<f64> = (0..=60).map(|i| i as f64 * 60.0).collect();
        let d = TickData { sessions: vec![ticks(&ts, &vec![10.0; ts.len()])] };
        let rows = empirical_report(&d, &[Frequency::from_seconds(300.0).unwrap()], &PluginConfig::default()).unwrap();
        let r = &rows[0];
        assert_eq!(r.sigma_naive, 0.0);
        assert_eq!(r.rho_hat, 0.0);
        assert!(r.kappa_naive.is_nan());
        assert!(r.flags.iter().any(|f| f.starts_with("kappa")));
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 123456.789] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        let s = IncrementSeries::from_values(vec![0.1, -0.2], 1.0).unwrap();
        let text = increments_csv(&s).unwrap();
        assert!(text.starts_with("index,increment\n1,"));
        assert_eq!(read_increments(text.as_bytes()).unwrap(), vec![0.1, -0.2]);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_atomic(&p, b"a").unwrap();
        write_atomic(&p, b"b").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "b");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
