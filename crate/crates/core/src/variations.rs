//! Sparse regular subgrids and realized power variations.
//!
//! The full grid `{t_0, ..., t_n}` is split into `K` subgrids; subgrid `i`
//! (1-based) holds the indices `i-1, i-1+K, ..., i-1+n_i K` with
//! `n_i = floor((n - i + 1) / K)` steps and spans `T_{i,K} = K delta n_i`.

use crate::error::{Error, Result};
use crate::sim::IncrementSeries;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

#[inline]
fn abs_pow(x: f64, ell: u32) -> f64 {
    match ell {
        1 => x.abs(),
        2 => x * x,
        4 => {
            let s = x * x;
            s * s
        }
        8 => {
            let s = x * x;
            let q = s * s;
            q * q
        }
        _ => x.abs().powi(ell as i32),
    }
}

fn check_order(ell: u32) -> Result<()> {
    if ell == 0 {
        return Err(Error::invalid("ell", "order of a power variation must be >= 1"));
    }
    Ok(())
}

/// The `K` sparse subgrids of a grid with `n` increments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPartition {
    n: usize,
    k: usize,
    counts: Vec<usize>,
}

impl GridPartition {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `n_i` for `i = 1..=K`, stored 0-based.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Indices of subgrid `i` (0-based; subgrid `i` starts at increment `i + 1`).
    pub fn subgrid(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..=self.counts[i]).map(move |j| i + j * self.k)
    }

    pub fn subgrids(&self) -> Vec<Vec<usize>> {
        (0..self.k).map(|i| self.subgrid(i).collect()).collect()
    }

    /// `T_{i,K} = K delta n_i`, evaluated as `T (K n_i / n)` so that a subgrid
    /// covering the whole grid spans exactly `T`.
    pub fn span(&self, i: usize, t_days: f64) -> f64 {
        t_days * ((self.k * self.counts[i]) as f64 / self.n as f64)
    }

    pub fn spans(&self, t_days: f64) -> Vec<f64> {
        (0..self.k).map(|i| self.span(i, t_days)).collect()
    }
}

/// Partitions `{0, ..., n}` into `K` regular subgrids with step `K`.
pub fn subgrid_partition(n: usize, k: usize) -> Result<GridPartition> {
    if k == 0 || k > n {
        return Err(Error::SubsamplingOutOfRange { k, n, min: 1, max: n });
    }
    let counts = (1..=k).map(|i| (n - i + 1) / k).collect();
    Ok(GridPartition { n, k, counts })
}

/// `sum_j |values[j+1] - values[j]|^ell` over consecutive observations.
pub fn realized_variation(values: &[f64], ell: u32) -> Result<f64> {
    check_order(ell)?;
    if values.len() < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: values.len() });
    }
    let acc: CompensatedSum = values.windows(2).map(|w| abs_pow(w[1] - w[0], ell)).collect();
    Ok(acc.value())
}

/// `sum_i |increments[i]|^ell`: the realized variation over the full grid.
pub fn power_sum(increments: &[f64], ell: u32) -> f64 {
    increments.iter().map(|&x| abs_pow(x, ell)).collect::<CompensatedSum>().value()
}

/// Cumulative path `X_0 = 0, X_j = sum_{m<j} Delta_m` kept in double-double
/// form, so `X_b - X_a` is accurate to a few ulps of the difference itself.
struct CumulativePath {
    hi: Vec<f64>,
    lo: Vec<f64>,
}

impl CumulativePath {
    fn new(increments: &[f64]) -> Self {
        let mut hi = Vec::with_capacity(increments.len() + 1);
        let mut lo = Vec::with_capacity(increments.len() + 1);
        let (mut s_hi, mut s_lo) = (0.0f64, 0.0f64);
        hi.push(0.0);
        lo.push(0.0);
        for &x in increments {
            // two-sum, then renormalise
            let s = s_hi + x;
            let bp = s - s_hi;
            let err = (s_hi - (s - bp)) + (x - bp);
            let low = s_lo + err;
            s_hi = s + low;
            s_lo = low - (s_hi - s);
            hi.push(s_hi);
            lo.push(s_lo);
        }
        CumulativePath { hi, lo }
    }

    #[inline]
    fn diff(&self, a: usize, b: usize) -> f64 {
        (self.hi[b] - self.hi[a]) + (self.lo[b] - self.lo[a])
    }
}

/// Realized `ell`-variation of each of the `K` subgrids, in subgrid order.
///
/// Subgrid differences are sums of `K` consecutive raw increments; for `K = 1`
/// the increments are used as they are.
pub fn subgrid_variations(series: &IncrementSeries, k: usize, ell: u32) -> Result<Vec<f64>> {
    check_order(ell)?;
    let xs = series.values();
    let n = xs.len();
    subgrid_partition(n, k)?;
    if k == 1 {
        return Ok(vec![power_sum(xs, ell)]);
    }
    let path = CumulativePath::new(xs);
    let mut acc = vec![CompensatedSum::default(); k];
    for m in 0..=(n - k) {
        acc[m % k].add(abs_pow(path.diff(m, m + k), ell));
    }
    Ok(acc.iter().map(CompensatedSum::value).collect())
}

/// `(1/K) sum_i [X~, X~]_ell^{G(i)} / T_{i,K}`.
///
/// Every subgrid must contain at least one step, i.e. `K <= (n + 1) / 2`.
pub fn averaged_sparse_variation(series: &IncrementSeries, k: usize, ell: u32) -> Result<f64> {
    let n = series.n();
    let max_k = n.div_ceil(2);
    if k == 0 || (k > max_k && k > 1) {
        return Err(Error::SubsamplingOutOfRange { k, n, min: 1, max: max_k.max(1) });
    }
    let partition = subgrid_partition(n, k)?;
    let variations = subgrid_variations(series, k, ell)?;
    let t = series.t_days();
    let total: CompensatedSum = variations
        .iter()
        .enumerate()
        .map(|(i, rv)| rv / partition.span(i, t))
        .collect();
    Ok(total.value() / k as f64)
}
