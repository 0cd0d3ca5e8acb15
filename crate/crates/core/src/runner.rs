//! Replicates in parallel, merged in replicate order.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs `f(0..count)` on `workers` threads (0 picks the default) and returns
/// the results ordered by replicate index, independently of scheduling.
pub fn run_replicates<T, F>(count: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
}

/// Like [`run_replicates`] for fallible work; the first error by replicate
/// index wins.
pub fn try_run_replicates<T, F>(count: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    run_replicates(count, workers, f)?.into_iter().collect()
}
