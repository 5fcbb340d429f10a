//! Thread-pool selection. `QDOPT_THREADS` caps the worker count; results never
//! depend on it because every parallel map collects in input order and every
//! reduction runs sequentially afterwards.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::ThreadPool;

pub const THREADS_ENV: &str = "QDOPT_THREADS";

/// Worker count from `QDOPT_THREADS`, falling back to the available cores.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn pool(threads: usize) -> Arc<ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS
        .get_or_init(|| Mutex::new(HashMap::new()))
        .lock()
        .expect("thread pool registry poisoned");
    pools
        .entry(threads)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .expect("failed to build thread pool"),
            )
        })
        .clone()
}

/// Runs `f` inside a pool of exactly `threads` workers.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    pool(threads.max(1)).install(f)
}

/// Runs `f` inside a pool sized by [`thread_count`].
pub fn with_env_threads<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    with_threads(thread_count(), f)
}
