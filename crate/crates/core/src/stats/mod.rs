//! Universality experiments built on the ensemble and spectral layers.

pub mod counting;
pub mod distribution;
pub mod singular;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use counting::{
    eig_count, gap_probability, gap_sandwich_report, smoothed_count, smoothing_q, CountingConfig, GapEnsemble,
    GapEstimate, SandwichReport,
};
pub use distribution::{empirical_cdf, ks_distance, ks_two_sample, median};
pub use singular::{
    bottom_k, delocalization_sup, lsv_experiment, lsv_limit_cdf, weyl_check, LsvEnsemble, LsvSample, WeylCheck,
};

/// A trial that raised an error; recorded instead of aborting the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: u64,
    pub error: String,
}

/// Runs `trials` independent trials on the current rayon pool and returns
/// the successes and failures, both ordered by trial index.
pub fn run_trials<T, F>(trials: u64, f: F) -> (Vec<T>, Vec<TrialFailure>)
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let results: Vec<(u64, Result<T>)> = (0..trials).into_par_iter().map(|k| (k, f(k))).collect();
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (trial, r) in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failed.push(TrialFailure {
                trial,
                error: e.to_string(),
            }),
        }
    }
    (ok, failed)
}
