//! Significance testing: one-sided exact binomial tail and percentile
//! bootstrap confidence intervals.

use alloc::string::ToString;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};

/// `P[X >= k]` for `X ~ Bin(n, p0)`, summed exactly in log space.
///
/// Tests `H0: rate = p0` against `H1: rate > p0`.
pub fn binomial_p_value(k: u64, n: u64, p0: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptySubpopulation);
    }
    if k > n {
        return Err(Error::InvalidArgument("k must not exceed n".to_string()));
    }
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::InvalidArgument("p0 must lie in [0, 1]".to_string()));
    }
    if k == 0 || p0 == 1.0 {
        return Ok(1.0);
    }
    if p0 == 0.0 {
        return Ok(0.0);
    }

    let mode = libm::floor((n as f64 + 1.0) * p0) as u64;
    if k > mode {
        Ok(libm::exp(log_tail_sum(n, k, p0, true)).clamp(0.0, 1.0))
    } else {
        // Near 1 the complement keeps neighbouring values ordered.
        Ok((-libm::expm1(log_tail_sum(n, k - 1, p0, false))).clamp(0.0, 1.0))
    }
}

/// `ln P[X >= start]` (`upper`) or `ln P[X <= start]`, summing pmf terms
/// away from `start` with the ratio recurrence and a running log-sum-exp.
fn log_tail_sum(n: u64, start: u64, p0: f64, upper: bool) -> f64 {
    let (nf, sf) = (n as f64, start as f64);
    let log_odds = libm::log(p0) - libm::log1p(-p0);
    let mut log_term = ln_choose(n, start) + sf * libm::log(p0) + (nf - sf) * libm::log1p(-p0);
    // Running sum represented as exp(scale) * acc.
    let mut scale = log_term;
    let mut acc = 1.0;
    let mut i = start;
    loop {
        if upper {
            if i == n {
                break;
            }
            log_term += libm::log((n - i) as f64 / (i + 1) as f64) + log_odds;
            i += 1;
        } else {
            if i == 0 {
                break;
            }
            log_term += libm::log(i as f64 / (n - i + 1) as f64) - log_odds;
            i -= 1;
        }
        if log_term > scale {
            acc = acc * libm::exp(scale - log_term) + 1.0;
            scale = log_term;
        } else {
            let rel = libm::exp(log_term - scale);
            acc += rel;
            if rel < 1e-18 * acc {
                break;
            }
        }
    }
    scale + libm::log(acc)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    if k < 32 {
        // Exact product form is more accurate for small k.
        (0..k)
            .map(|j| libm::log((n - j) as f64) - libm::log((j + 1) as f64))
            .sum()
    } else {
        libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
    }
}

/// Nearest-rank quantile of ascending `sorted` at probability `q` in (0, 1].
pub fn nearest_rank_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    // Guard against 0.025 * 1000 evaluating to 25.000000000000004.
    let rank = libm::ceil(q * n as f64 - 1e-9) as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Percentile bootstrap CI of the mean of `flags`.
///
/// Each of the `resamples` draws `n` flags with replacement. The number of
/// set flags in such a draw is `Bin(n, k/n)`, which is sampled directly.
pub fn bootstrap_ci(flags: &[bool], resamples: usize, alpha: f64, seed: u64) -> Result<(f64, f64)> {
    let k = flags.iter().filter(|f| **f).count() as u64;
    bootstrap_ci_counts(k, flags.len() as u64, resamples, alpha, seed)
}

/// [`bootstrap_ci`] from the count of set flags `k` out of `n`.
pub fn bootstrap_ci_counts(k: u64, n: u64, resamples: usize, alpha: f64, seed: u64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::EmptySubpopulation);
    }
    if resamples == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one resample".to_string()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument("alpha must lie in (0, 1)".to_string()));
    }
    if k == 0 {
        return Ok((0.0, 0.0));
    }
    if k == n {
        return Ok((1.0, 1.0));
    }
    let rate = k as f64 / n as f64;
    let dist = Binomial::new(n, rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| dist.sample(&mut rng) as f64 / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Ok((
        nearest_rank_quantile(&means, alpha / 2.0),
        nearest_rank_quantile(&means, 1.0 - alpha / 2.0),
    ))
}

/// Mixes a base seed with a key (FNV-1a then splitmix64 finalizer).
pub fn derive_seed(base: u64, key: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ base;
    for b in key {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
