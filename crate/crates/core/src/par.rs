//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these fan out over rayon's global
//! pool; without it they are plain sequential loops. Reductions always
//! collect per-row partials in order and sum them sequentially, so results
//! are bit-identical between the two builds and across runs.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum number of elements handed to one rayon task for site-local maps.
#[cfg(feature = "parallel")]
const MIN_LEN: usize = 4096;

/// Whether this build dispatches to rayon.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Applies `f(chunk_index, chunk)` to consecutive chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Applies `f(index, element)` to every element.
pub fn for_each_mut<T, F>(data: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    data.par_iter_mut()
        .with_min_len(MIN_LEN)
        .enumerate()
        .for_each(|(i, x)| f(i, x));
    #[cfg(not(feature = "parallel"))]
    data.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Builds `vec![f(0), f(1), .., f(n-1)]`.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().with_min_len(MIN_LEN).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Coarse-grained map for independent jobs (runs, trials, bands).
pub fn map_jobs<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Deterministic sum of `f(row)` over `rows` rows.
pub fn sum_rows<F>(rows: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let partial: Vec<f64> = (0..rows).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    let partial: Vec<f64> = (0..rows).map(f).collect();
    partial.iter().sum()
}

/// Deterministic maximum of `f(row)` over `rows` rows (0 for no rows).
pub fn max_rows<F>(rows: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let partial: Vec<f64> = (0..rows).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    let partial: Vec<f64> = (0..rows).map(f).collect();
    partial.into_iter().fold(0.0, f64::max)
}
