use qmem_core::detection::CountRecord;
use qmem_core::estimators::montecarlo::{resample, summarize, EstimateWithError, MIN_RESAMPLES};
use qmem_core::pipeline::TrialRunner;
use qmem_core::{Error, Result};
use rayon::prelude::*;

/// Runs Monte-Carlo trials on the rayon pool. Every trial owns a seed
/// derived from its index and results come back in index order, so the
/// outcome does not depend on scheduling.
#[derive(Debug, Clone, Copy, Default)]
pub struct Parallel;

impl TrialRunner for Parallel {
    fn run(&self, n: usize, trial: &(dyn Fn(usize) -> Result<f64> + Sync)) -> Vec<Result<f64>> {
        (0..n).into_par_iter().map(trial).collect()
    }
}

/// Parallel counterpart of [`qmem_core::estimators::mc_error`]; returns
/// identical values for the same seed.
pub fn mc_error<F>(
    estimator: F,
    records: &[CountRecord],
    n_resamples: usize,
    seed: u64,
) -> Result<EstimateWithError>
where
    F: Fn(&[CountRecord]) -> Result<f64> + Sync,
{
    if n_resamples < MIN_RESAMPLES {
        return Err(Error::Validation(format!(
            "at least {MIN_RESAMPLES} resamples required, got {n_resamples}"
        )));
    }
    let trial = |k: usize| estimator(&resample(records, seed, k));
    summarize(&Parallel.run(n_resamples, &trial))
}
