//! Feature-gated data parallelism.
//!
//! All parallel loops in this crate go through `par_map_indexed`, which maps a
//! function over `0..n` and returns the results **in index order**. Keeping
//! the reduction order fixed (collect, then fold sequentially) makes results
//! bit-identical whether or not the `parallel` feature is enabled, and
//! independent of the rayon thread count.

#[cfg(feature = "parallel")]
pub fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
