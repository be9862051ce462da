//! Index-ordered parallel map. Results always come back in index order, so
//! any reduction over them is schedule independent.

#[cfg(feature = "parallel")]
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Caps the worker count of the global pool. Only the first call has effect.
#[cfg(feature = "parallel")]
pub fn set_threads(n: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

#[cfg(not(feature = "parallel"))]
pub fn set_threads(_n: usize) {}
