//! Data-parallel map over grid indices, with a sequential fallback when the
//! `parallel` feature is disabled. Results are assembled by index, so output
//! is deterministic regardless of execution order.

/// Map `f` over `0..n`, in parallel when available.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..n).map(f).collect()
}

/// Cap the global worker pool at `n` threads. Must be called before the
/// first parallel map; later calls fail once the pool exists.
#[cfg(feature = "parallel")]
pub fn limit_threads(n: usize) -> std::result::Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

/// No-op without a worker pool: execution is already single-threaded.
#[cfg(not(feature = "parallel"))]
pub fn limit_threads(_n: usize) -> std::result::Result<(), String> {
    Ok(())
}

/// Always-sequential variant, kept for benchmarking against the parallel path.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
