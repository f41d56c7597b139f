//! Order-preserving data-parallel map helpers.
//!
//! All bulk loops in this crate (sample sweeps, pairwise distance tables,
//! experiment cells) are pure functions of their index.  They go through
//! [`map_indexed`], which runs on the rayon pool when the `parallel` feature
//! is enabled and sequentially otherwise.  Results are always collected in
//! input order, so the output is identical for any thread count — floating
//! point reductions are never parallelized, only the independent evaluations.
//!
//! [`map_indexed_seq`] is the sequential path under its own name, available
//! in every build so benchmarks can compare the two directly.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order.  Parallel when built with the
/// `parallel` feature, sequential otherwise.
pub fn map_indexed<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(items, f)
    }
}

/// Sequential reference implementation of [`map_indexed`].
pub fn map_indexed_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Map `f` over the index range `0..n` (order preserved, parallel when
/// enabled).  Convenience for loops that have no backing slice.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(&f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
