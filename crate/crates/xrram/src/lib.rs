//! Std companion to `xrram-core`: run configuration, on-disk formats,
//! dataset readers and the pipeline commands behind the `xrram` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod datasets;
pub mod error;
pub mod formats;
pub mod model_io;
pub mod parallel;

pub use config::RunConfig;
pub use error::{CliError, Result};

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(f),
        None => f(),
    }
}
