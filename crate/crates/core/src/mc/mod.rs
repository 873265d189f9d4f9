//! Monte Carlo experiment engine.
//!
//! An [`ExperimentConfig`] names a model, a cluster, a sample size, a number
//! of replications and a mode. Replication `i` draws its data from
//! `replication_seed(base_seed, i)` and nothing else, so results do not depend
//! on how replications are scheduled across threads. Aggregation runs
//! sequentially in replication order.
//!
//! Set `PCA_WALD_THREADS` to cap the number of worker threads.

mod config;
mod engine;
mod ks;
mod output;

pub use config::{ExperimentConfig, Mode};
pub use engine::{
    bias_replication, bias_sweep, predicted_bias_scale, run, BiasRow, Experiment, ExperimentSummary, Replication,
};
pub use ks::{ks_distance, Reference};
pub use output::{
    read_replications, write_bias_table, write_bound_rows, write_opnorm_table, write_outputs, write_replications,
    BIAS_HEADER, OPNORM_HEADER, PERTURB_HEADER, REPLICATIONS_HEADER,
};

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "PCA_WALD_THREADS";

/// A dedicated pool when `PCA_WALD_THREADS` is set, otherwise `None` (use the
/// global pool).
pub fn configured_pool() -> Result<Option<rayon::ThreadPool>> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Precondition(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::Precondition(e.to_string()))
}
