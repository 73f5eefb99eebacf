//! Node-parallel evaluation with a sequential fallback.
//!
//! With the `parallel` feature (on by default) the maps below run on the
//! rayon global pool. Results are always collected in index order and every
//! reduction goes through [`pairwise_sum`], so output does not depend on the
//! number of threads.

use crate::error::Result;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(k)` for `k in 0..n` and collects the results in order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Like [`map_indexed`] but stops at the lowest-index error.
pub fn try_map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let all = map_indexed(n, f);
    let mut out = Vec::with_capacity(n);
    for r in all {
        out.push(r?);
    }
    Ok(out)
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// True when the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
