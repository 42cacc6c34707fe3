//! Batch execution: a bounded rayon pool when the `parallel` feature is on,
//! the calling thread otherwise.

use serde::{Deserialize, Serialize};

pub const DEFAULT_CONCURRENCY: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Execution {
    Sequential,
    Parallel { threads: usize },
}

impl Default for Execution {
    fn default() -> Self {
        Self::with_cap(DEFAULT_CONCURRENCY)
    }
}

impl Execution {
    /// `Parallel` with the given in-flight cap; a cap of 1 or less is sequential.
    pub fn with_cap(cap: usize) -> Self {
        if cap <= 1 {
            Self::Sequential
        } else {
            Self::Parallel { threads: cap }
        }
    }

    pub fn threads(&self) -> usize {
        match self {
            Self::Sequential => 1,
            Self::Parallel { threads } => *threads,
        }
    }

    /// Maps `f` over `items`, preserving input order in the output.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Self::Sequential => items.iter().map(f).collect(),
            Self::Parallel { threads } => parallel_map(*threads, items, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(threads: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if items.len() < 2 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            tracing::warn!(error = %e, "thread pool unavailable, running sequentially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(_threads: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}
