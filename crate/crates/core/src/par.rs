//! Data-parallel helpers with a sequential fallback.
//!
//! Every parallel map here preserves input order, and reductions are always
//! folded sequentially over fixed-size chunks, so results do not depend on
//! the number of worker threads.

use serde::{Deserialize, Serialize};

/// Execution strategy for the data-parallel inner loops.
///
/// `Rayon` silently degrades to `Sequential` when the crate is built without
/// the `parallel` feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    Sequential,
    #[default]
    Rayon,
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Rayon
    }
}

/// Ordered map over a slice.
pub fn map<T, R, F>(items: &[T], par: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = par;
    items.iter().map(f).collect()
}

/// Ordered map over `0..n`.
pub fn map_range<R, F>(n: usize, par: Parallelism, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = par;
    (0..n).map(f).collect()
}

/// Ordered map over fixed-size chunks of a slice.
pub fn map_chunks<T, R, F>(items: &[T], chunk: usize, par: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        use rayon::prelude::*;
        return items
            .par_chunks(chunk)
            .enumerate()
            .map(|(i, c)| f(i * chunk, c))
            .collect();
    }
    let _ = par;
    items.chunks(chunk).enumerate().map(|(i, c)| f(i * chunk, c)).collect()
}

/// Pairwise summation; deterministic for a given slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_map_is_order_preserving() {
        let xs: Vec<usize> = (0..1000).collect();
        let seq = map_chunks(&xs, 7, Parallelism::Sequential, |start, c| {
            (start, c.iter().sum::<usize>())
        });
        let par = map_chunks(&xs, 7, Parallelism::Rayon, |start, c| (start, c.iter().sum::<usize>()));
        assert_eq!(seq, par);
        assert_eq!(seq[1].0, 7);
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1001).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }
}
