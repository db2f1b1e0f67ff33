//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (default) this fans out over the current
//! rayon pool; without it, it is a plain sequential map. Results are
//! returned in index order either way, and callers derive per-item RNG
//! streams from the item index, so outputs are independent of scheduling.

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
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
