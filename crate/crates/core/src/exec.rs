//! Data-parallel helpers with a sequential fallback.
//!
//! Everything hot in this crate (belief-propagation blocks, convolution slabs,
//! Monte Carlo trials, quantizer rows) funnels through these functions. With
//! the default `parallel` feature they dispatch to rayon; without it they are
//! plain loops. All of them are order-stable: outputs are written by index,
//! never reduced in nondeterministic order, so results are identical on both
//! paths.
//!
//! [`with_forced_sequential`] flips a thread-local switch that makes the
//! helpers take the sequential path even in a `parallel` build. The criterion
//! bench suite uses it to compare both paths inside one binary.

use std::cell::Cell;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with all exec helpers on the calling thread forced sequential.
pub fn with_forced_sequential<R>(f: impl FnOnce() -> R) -> R {
    FORCE_SEQUENTIAL.with(|c| c.set(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(false));
    out
}

#[cfg(feature = "parallel")]
fn sequential() -> bool {
    FORCE_SEQUENTIAL.with(|c| c.get())
}

/// `(0..n).map(f)` collected in index order.
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !sequential() {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Applies `f(i, chunk_i)` to consecutive equal-length chunks of `data`.
///
/// `data.len()` must be a multiple of `chunk`. Chunks are disjoint, so the
/// parallel path needs no synchronization.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0 && data.len() % chunk == 0, "uneven chunking");
    #[cfg(feature = "parallel")]
    {
        if !sequential() {
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_collect_is_index_ordered() {
        let v = map_collect(100, |i| i * 2);
        assert_eq!(v[0], 0);
        assert_eq!(v[99], 198);
    }

    #[test]
    fn forced_sequential_matches_parallel() {
        let a = map_collect(1000, |i| (i as f64).sin());
        let b = with_forced_sequential(|| map_collect(1000, |i| (i as f64).sin()));
        assert_eq!(a, b);
    }

    #[test]
    fn chunked_writes_cover_everything() {
        let mut data = vec![0usize; 12];
        for_each_chunk_mut(&mut data, 3, |i, c| c.iter_mut().for_each(|x| *x = i));
        assert_eq!(data, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
    }
}
