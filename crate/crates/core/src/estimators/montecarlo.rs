//! Poisson resampling error bars.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::detection::{poisson, CountRecord};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

pub const MIN_RESAMPLES: usize = 100;
/// Largest tolerated fraction of failed resamples.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimateWithError {
    pub value: f64,
    pub sigma: f64,
    pub n_resamples: usize,
}

/// One Poisson replica of `records`; trial `k` always draws from the same
/// derived stream.
pub fn resample(records: &[CountRecord], seed: u64, trial: usize) -> Vec<CountRecord> {
    let mut rng = rng_from_seed(derive_seed(seed, trial as u64));
    records
        .iter()
        .map(|r| {
            let s1 = poisson(&mut rng, r.singles_1 as f64);
            let s2 = poisson(&mut rng, r.singles_2 as f64);
            let c = poisson(&mut rng, r.coincidences as f64);
            let t = poisson(&mut rng, r.triples as f64);
            r.with_counts(s1.max(c), s2.max(c), c, t)
        })
        .collect()
}

/// Mean and sample standard deviation of per-trial results, in trial order.
pub fn summarize(results: &[Result<f64>]) -> Result<EstimateWithError> {
    let n = results.len();
    if n < MIN_RESAMPLES {
        return Err(Error::validation(alloc::format!(
            "at least {MIN_RESAMPLES} resamples required, got {n}"
        )));
    }
    let ok: Vec<f64> = results
        .iter()
        .filter_map(|r| r.as_ref().ok().copied())
        .collect();
    let failed = n - ok.len();
    if failed as f64 > MAX_FAILURE_FRACTION * n as f64 {
        let first = results.iter().find_map(|r| r.as_ref().err()).cloned();
        return Err(Error::estimation(alloc::format!(
            "estimator failed on {failed} of {n} resamples{}",
            first
                .map(|e| alloc::format!(" (first: {e})"))
                .unwrap_or_default()
        )));
    }
    let m = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / m;
    let var = if ok.len() > 1 {
        ok.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Ok(EstimateWithError {
        value: mean,
        sigma: var.max(0.0).sqrt(),
        n_resamples: n,
    })
}

/// Sequential resampling; see the std crate for a parallel driver.
pub fn mc_error<F>(
    estimator: F,
    records: &[CountRecord],
    n_resamples: usize,
    seed: u64,
) -> Result<EstimateWithError>
where
    F: Fn(&[CountRecord]) -> Result<f64>,
{
    if n_resamples < MIN_RESAMPLES {
        return Err(Error::validation(alloc::format!(
            "at least {MIN_RESAMPLES} resamples required, got {n_resamples}"
        )));
    }
    let results: Vec<Result<f64>> = (0..n_resamples)
        .map(|k| estimator(&resample(records, seed, k)))
        .collect();
    summarize(&results)
}
