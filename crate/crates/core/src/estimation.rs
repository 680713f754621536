//! Monte-Carlo and empirical estimators of spectral risks and price bounds.
//!
//! The empirical estimators treat a sample sequence as a uniform scenario
//! space. The bootstrap estimators draw with replacement from the sample;
//! they are deterministic given a seed: resamples are processed in
//! fixed-size chunks, each chunk on its own counter-derived RNG stream, and
//! the chunk results are combined in chunk order — so the result is
//! bit-identical no matter how many threads run the chunks.

use crate::error::{Error, Result};
use crate::num::{real, Scalar};
use crate::spectral::WeightingMeasure;
use crate::transforms::Contribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// Resamples per RNG stream. Fixed: changing it would change which draws
/// belong to which stream and hence the estimates for a given seed.
const CHUNK: usize = 4096;

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate<T> {
    pub value: T,
    pub std_error: T,
}

fn check_samples<T: Scalar>(samples: &[T]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::domain("samples must be nonempty".to_string()));
    }
    for &s in samples {
        if !s.is_finite() {
            return Err(Error::domain(format!("samples must be finite, got {s}")));
        }
    }
    Ok(())
}

/// Spectral risk of the empirical (uniform) distribution of the samples:
/// sort ascending and weight the order statistics by the distortion
/// increments at `t/T`.
pub fn est_wvar<T: Scalar>(samples: &[T], mu: &WeightingMeasure<T>) -> Result<T> {
    check_samples(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("samples are finite"));
    let d = mu.distortion();
    let t_count = real::<T>(sorted.len() as f64);
    let mut acc = T::zero();
    let mut prev = T::zero();
    for (t, &x) in sorted.iter().enumerate() {
        let z = real::<T>((t + 1) as f64) / t_count;
        let cur = d.value(z);
        acc += x * (cur - prev);
        prev = cur;
    }
    Ok(-acc)
}

/// Bootstrap mean of `per_resample` over `resamples` independent resamples,
/// with the sample standard error of that mean.
fn bootstrap<T, F>(m: usize, seed: u64, per_resample: F) -> McEstimate<T>
where
    T: Scalar,
    F: Fn(&mut ChaCha12Rng) -> T + Sync,
{
    let chunks = m.div_ceil(CHUNK);
    let partials: Vec<(T, T)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(m - c * CHUNK);
            let mut sum = T::zero();
            let mut sumsq = T::zero();
            for _ in 0..count {
                let v = per_resample(&mut rng);
                sum += v;
                sumsq += v * v;
            }
            (sum, sumsq)
        })
        .collect();
    let mut sum = T::zero();
    let mut sumsq = T::zero();
    for &(s, ss) in &partials {
        sum += s;
        sumsq += ss;
    }
    let m_t = real::<T>(m as f64);
    let mean = sum / m_t;
    let std_error = if m > 1 {
        let var = ((sumsq - sum * sum / m_t) / real::<T>((m - 1) as f64)).max(T::zero());
        (var / m_t).sqrt()
    } else {
        T::zero()
    };
    McEstimate {
        value: mean,
        std_error,
    }
}

/// Bootstrap estimate of the risk `-E[min of alpha independent copies]`:
/// each resample draws `alpha` values with replacement and contributes the
/// negated minimum.
pub fn est_alpha_var<T: Scalar>(
    samples: &[T],
    alpha: usize,
    resamples: usize,
    seed: u64,
) -> Result<McEstimate<T>> {
    est_beta_var(samples, alpha, 1, resamples, seed)
}

/// Bootstrap estimate of the risk `-E[mean of the beta smallest of alpha
/// independent copies]`. `beta = 1` recovers [`est_alpha_var`] draw for
/// draw.
pub fn est_beta_var<T: Scalar>(
    samples: &[T],
    alpha: usize,
    beta: usize,
    resamples: usize,
    seed: u64,
) -> Result<McEstimate<T>> {
    check_samples(samples)?;
    if alpha == 0 {
        return Err(Error::domain("alpha must be at least 1".to_string()));
    }
    if beta == 0 || beta > alpha {
        return Err(Error::domain(format!(
            "beta must satisfy 1 <= beta <= alpha, got beta={beta}, alpha={alpha}"
        )));
    }
    if resamples == 0 {
        return Err(Error::domain(
            "at least one resample is required".to_string(),
        ));
    }
    let n = samples.len();
    let beta_t = real::<T>(beta as f64);
    Ok(bootstrap(resamples, seed, |rng| {
        let mut draws: Vec<T> = (0..alpha).map(|_| samples[rng.gen_range(0..n)]).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).expect("samples are finite"));
        let tail: T = draws[..beta].iter().copied().sum();
        -(tail / beta_t)
    }))
}

/// Empirical risk contribution of `x` to the portfolio `w`: sort the pairs
/// by `w` ascending and weight the `x` values by the distortion increments.
/// This estimates the largest expectation of `x` over the determining set —
/// the caller negates it to read a risk.
///
/// Tied `w` values keep their input order and clear the `unique` flag: the
/// stress measure putting weight on the tie is not unique, so neither is
/// the contribution.
pub fn est_risk_contribution<T: Scalar>(
    pairs: &[(T, T)],
    mu: &WeightingMeasure<T>,
) -> Result<Contribution<T>> {
    if pairs.is_empty() {
        return Err(Error::domain("pairs must be nonempty".to_string()));
    }
    for &(x, w) in pairs {
        if !x.is_finite() || !w.is_finite() {
            return Err(Error::domain(format!(
                "pair values must be finite, got ({x}, {w})"
            )));
        }
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| {
        pairs[a]
            .1
            .partial_cmp(&pairs[b].1)
            .expect("pair values are finite")
    });
    let unique = order
        .windows(2)
        .all(|w2| pairs[w2[0]].1 != pairs[w2[1]].1);
    let d = mu.distortion();
    let t_count = real::<T>(pairs.len() as f64);
    let mut acc = T::zero();
    let mut prev = T::zero();
    for (t, &idx) in order.iter().enumerate() {
        let z = real::<T>((t + 1) as f64) / t_count;
        let cur = d.value(z);
        acc += pairs[idx].0 * (cur - prev);
        prev = cur;
    }
    Ok(Contribution { value: acc, unique })
}

/// Factor risk estimate: sort the pairs by the factor `y`, split them into
/// `bins` equal-frequency bins, replace each `x` by its bin's mean of `x`
/// (an estimate of the conditional expectation given the factor), and take
/// the empirical spectral risk of those smoothed values.
pub fn est_factor_risk<T: Scalar>(
    pairs: &[(T, T)],
    mu: &WeightingMeasure<T>,
    bins: usize,
) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::domain("pairs must be nonempty".to_string()));
    }
    for &(x, y) in pairs {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::domain(format!(
                "pair values must be finite, got ({x}, {y})"
            )));
        }
    }
    let t_count = pairs.len();
    if bins == 0 || bins > t_count {
        return Err(Error::domain(format!(
            "bin count must be between 1 and the sample count {t_count}, got {bins}"
        )));
    }
    let mut order: Vec<usize> = (0..t_count).collect();
    order.sort_by(|&a, &b| {
        pairs[a]
            .1
            .partial_cmp(&pairs[b].1)
            .expect("pair values are finite")
    });
    let mut smoothed = vec![T::zero(); t_count];
    for b in 0..bins {
        let start = b * t_count / bins;
        let end = (b + 1) * t_count / bins;
        let mut mean = T::zero();
        for &idx in &order[start..end] {
            mean += pairs[idx].0;
        }
        mean /= real::<T>((end - start) as f64);
        for &idx in &order[start..end] {
            smoothed[idx] = mean;
        }
    }
    est_wvar(&smoothed, mu)
}

/// Upper price estimate of a claim from aligned sample sequences: for each
/// hedge candidate `X` and each measure, the empirical risk of `X - F`
/// bounds the price from above; take the minimum. An empty candidate list
/// means the unhedged bound (candidate zero).
pub fn est_upper_price<T: Scalar>(
    claim_samples: &[T],
    hedge_candidates: &[Vec<T>],
    measures: &[WeightingMeasure<T>],
) -> Result<T> {
    check_samples(claim_samples)?;
    if measures.is_empty() {
        return Err(Error::shape(
            "at least one measure is required".to_string(),
        ));
    }
    for (i, candidate) in hedge_candidates.iter().enumerate() {
        if candidate.len() != claim_samples.len() {
            return Err(Error::shape(format!(
                "hedge candidate {i} has {} samples but the claim has {}",
                candidate.len(),
                claim_samples.len()
            )));
        }
    }
    let zero = vec![T::zero(); claim_samples.len()];
    let candidates: Vec<&[T]> = if hedge_candidates.is_empty() {
        vec![&zero]
    } else {
        hedge_candidates.iter().map(|c| c.as_slice()).collect()
    };
    let mut best: Option<T> = None;
    for candidate in candidates {
        let hedged: Vec<T> = candidate
            .iter()
            .zip(claim_samples)
            .map(|(&x, &f)| x - f)
            .collect();
        for mu in measures {
            let bound = est_wvar(&hedged, mu)?;
            best = Some(match best {
                Some(b) => b.min(bound),
                None => bound,
            });
        }
    }
    Ok(best.expect("at least one candidate and one measure"))
}
