//! File formats, configuration and the staged experiment pipeline built on
//! [`netalloc_core`].

pub mod config;
pub mod error;
pub mod formats;
pub mod io;
pub mod pipeline;

pub use config::{ExperimentConfig, Method, NetworkSpec};
pub use error::{Error, Result};
pub use pipeline::{replay, run_experiment, run_stage, Manifest, Stage};

/// Environment variable that sets the worker-thread count.
pub const WORKERS_ENV: &str = "NETALLOC_WORKERS";

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} worker threads: {e}")))?;
    Ok(pool.install(f))
}
