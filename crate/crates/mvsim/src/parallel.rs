//! Worker-thread control. Kernels parallelized here are purely elementwise,
//! so results are bitwise identical at any thread count; threads = 1 is the
//! deterministic reference mode that also skips the thread pool entirely.
//! Reductions stay sequential everywhere.

use std::sync::atomic::{AtomicUsize, Ordering};

static THREADS: AtomicUsize = AtomicUsize::new(1);

/// Sets the worker count for data-parallel kernels. Values above 1 configure
/// the global rayon pool (first caller wins, as rayon allows one global
/// configuration per process).
pub fn set_threads(n: usize) {
    let n = n.max(1);
    THREADS.store(n, Ordering::Relaxed);
    if n > 1 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

pub fn parallel_enabled() -> bool {
    threads() > 1
}
