#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twoscale::sim::{simulate_increments, IncrementSeries, ModelParams, NoiseSpec, SamplingScheme};
use twoscale::tuning::{KRule, TheoryInputs};
use twoscale::variations::{averaged_sparse_variation, power_sum, subgrid_partition, subgrid_variations};
use twoscale::Clock;

pub type Check = Result<(), String>;

/// Every index in exactly one subgrid, `sum n_i = n - K + 1`, for all `1 <= K <= n <= max_n`.
pub fn check_partitions(max_n: usize) -> Check {
    let mut seen = vec![0u32; max_n + 1];
    for n in 1..=max_n {
        for k in 1..=n {
            let p = subgrid_partition(n, k).map_err(|e| e.to_string())?;
            seen[..=n].iter_mut().for_each(|s| *s = 0);
            for i in 0..k {
                for idx in p.subgrid(i) {
                    if idx > n {
                        return Err(format!("n={n} K={k}: index {idx} outside grid"));
                    }
                    seen[idx] += 1;
                }
            }
            if let Some(bad) = seen[..=n].iter().position(|&c| c != 1) {
                return Err(format!("n={n} K={k}: index {bad} covered {} times", seen[bad]));
            }
            let total: usize = p.counts().iter().sum();
            if total != n + 1 - k {
                return Err(format!("n={n} K={k}: sum n_i = {total}"));
            }
        }
    }
    Ok(())
}

/// Dyadic rationals `j 2^-30` with `|j| < 2^30`: sums of up to `2^20` of them are exact.
pub fn random_increments(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let j = rng.random_range(-(1i64 << 20)..(1i64 << 20)) << rng.random_range(0..10);
            j as f64 / (1u64 << 30) as f64
        })
        .collect()
}

/// Rounding-error scale of subgrid `i`: `sum_blocks (sum |x|)^ell`.
pub fn variation_scale(xs: &[f64], k: usize, i: usize, ell: u32) -> f64 {
    let abs: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
    naive_subgrid_variation(&abs, k, i, ell)
}

/// Subgrid `i` variation computed from blocks of `K` raw increments.
pub fn naive_subgrid_variation(xs: &[f64], k: usize, i: usize, ell: u32) -> f64 {
    let n = xs.len();
    let mut total = 0.0;
    let mut start = i;
    while start + k <= n {
        let block: f64 = xs[start..start + k].iter().sum();
        total += block.abs().powi(ell as i32);
        start += k;
    }
    total
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Library subgrid variations agree with the naive oracle within `tol` for all `K <= n <= max_n`.
pub fn check_naive_oracle(max_n: usize, orders: &[u32], tol: f64, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 1..=max_n {
        let xs = random_increments(&mut rng, n);
        let series = IncrementSeries::from_values(xs.clone(), 1.0).map_err(|e| e.to_string())?;
        for &ell in orders {
            for k in 1..=n {
                let got = subgrid_variations(&series, k, ell).map_err(|e| e.to_string())?;
                for (i, g) in got.iter().enumerate() {
                    let want = naive_subgrid_variation(&xs, k, i, ell);
                    if !rel_close(*g, want, tol) {
                        return Err(format!("n={n} K={k} i={i} ell={ell}: {g} vs {want}"));
                    }
                }
            }
        }
    }
    Ok(())
}

/// `[cX]_ell = |c|^ell [X]_ell` for every subgrid.
pub fn check_homogeneity(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let n = rng.random_range(2..300);
        let k = rng.random_range(1..=n);
        let ell = [1u32, 2, 3, 4, 8][rng.random_range(0..5)];
        let c = rng.random_range(-5.0..5.0);
        let xs = random_increments(&mut rng, n);
        let s = IncrementSeries::from_values(xs, 2.0).unwrap();
        let base = subgrid_variations(&s, k, ell).unwrap();
        let scaled = subgrid_variations(&s.scaled(c), k, ell).unwrap();
        for (i, (a, b)) in base.iter().zip(&scaled).enumerate() {
            let cl = c.abs().powi(ell as i32);
            let want = cl * a;
            if (b - want).abs() > 1e-12 * cl * variation_scale(s.values(), k, i, ell) {
                return Err(format!("n={n} K={k} ell={ell} c={c}: {b} vs {want}"));
            }
        }
    }
    Ok(())
}

/// `K = 1` gives the full-grid variation, and the averaged form divides it by `T`.
pub fn check_k1_reduction(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let n = rng.random_range(2..400);
        let t = rng.random_range(0.5..300.0);
        let xs = random_increments(&mut rng, n);
        let s = IncrementSeries::from_values(xs.clone(), t).unwrap();
        for ell in [1u32, 2, 4] {
            let full = power_sum(&xs, ell);
            if subgrid_variations(&s, 1, ell).unwrap() != vec![full] {
                return Err(format!("n={n} ell={ell}: subgrid variation differs from the full grid"));
            }
            let avg = averaged_sparse_variation(&s, 1, ell).unwrap();
            if !rel_close(avg, full / t, 1e-15) {
                return Err(format!("n={n} ell={ell}: {avg} vs {}", full / t));
            }
        }
    }
    Ok(())
}

/// Same seed gives bit-identical paths; different streams differ.
pub fn check_seed_determinism() -> Check {
    for clock in [Clock::Gamma, Clock::InverseGaussian] {
        let model = ModelParams::new(0.02, 0.3, clock).unwrap().with_drifts(-0.01, 0.001).unwrap();
        let scheme = SamplingScheme::new(5_000, 10.0).unwrap();
        let noise = NoiseSpec::new(0.005).unwrap();
        let a = simulate_increments(&model, &scheme, &noise, twoscale::Seed::replicate(9, 3)).unwrap();
        let b = simulate_increments(&model, &scheme, &noise, twoscale::Seed::replicate(9, 3)).unwrap();
        let c = simulate_increments(&model, &scheme, &noise, twoscale::Seed::replicate(9, 4)).unwrap();
        if a.values().iter().zip(b.values()).any(|(x, y)| x.to_bits() != y.to_bits()) {
            return Err(format!("{clock:?}: same seed, different path"));
        }
        if a.values() == c.values() {
            return Err(format!("{clock:?}: distinct streams produced the same path"));
        }
    }
    Ok(())
}

/// Random theory inputs with Gaussian-noise moments over wide ranges.
pub fn random_theory_inputs(rng: &mut ChaCha8Rng) -> TheoryInputs {
    let n = rng.random_range(50..20_000);
    let t = rng.random_range(1.0..500.0);
    let sigma = 10f64.powf(rng.random_range(-2.5..-1.0));
    let rho = 10f64.powf(rng.random_range(-4.0..-2.0));
    let r2 = rho * rho;
    // perturb the noise moments away from the Gaussian relations
    let m4 = 3.0 * r2 * r2 * rng.random_range(0.5..3.0);
    let m4d = 12.0 * r2 * r2 * rng.random_range(0.5..3.0);
    let e = 1536.0 * r2.powi(4) * rng.random_range(0.5..3.0);
    TheoryInputs { n, t_days: t, sigma2: sigma * sigma, kappa: 0.3, m2_eps: r2, m4_eps: m4, m4_diff: m4d, e_eps: e }
}

pub fn brute_force_k(rule: KRule, inp: &TheoryInputs) -> usize {
    (2..=inp.n / 2)
        .min_by(|&a, &b| rule.objective(inp, a as f64).total_cmp(&rule.objective(inp, b as f64)))
        .expect("non-empty range")
}

/// Each closed-form `K*` is within one of the integer minimiser of its objective.
pub fn check_k_star_brute_force(configs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in 0..configs {
        let inp = random_theory_inputs(&mut rng);
        for rule in KRule::ALL {
            let closed = rule.k(&inp);
            let brute = brute_force_k(rule, &inp);
            if closed.abs_diff(brute) > 1 {
                return Err(format!("config {c} {rule:?}: closed form {closed}, brute force {brute} ({inp:?})"));
            }
        }
    }
    Ok(())
}
