//! Ordered data-parallel map with a sequential fallback.
//!
//! Results always come back in input order, and per-item work must be
//! deterministic given its input, so the parallel and sequential paths are
//! bit-identical. Benches compare the two directly.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map_ordered<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.par_iter().map(f).collect()
}

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Always-sequential variant, kept for the bench suite and determinism
/// cross-checks.
pub fn map_ordered_seq<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Maps `f` over index chunks of `0..n`, merging chunk outputs in order.
#[cfg(feature = "parallel")]
pub fn map_ranges<R: Send>(n: u64, chunk: u64, f: impl Fn(std::ops::Range<u64>) -> R + Sync + Send) -> Vec<R> {
    let ranges: Vec<std::ops::Range<u64>> = split_ranges(n, chunk);
    ranges.into_par_iter().map(f).collect()
}

/// Maps `f` over index chunks of `0..n`, merging chunk outputs in order.
#[cfg(not(feature = "parallel"))]
pub fn map_ranges<R: Send>(n: u64, chunk: u64, f: impl Fn(std::ops::Range<u64>) -> R + Sync + Send) -> Vec<R> {
    split_ranges(n, chunk).into_iter().map(f).collect()
}

fn split_ranges(n: u64, chunk: u64) -> Vec<std::ops::Range<u64>> {
    let chunk = chunk.max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        out.push(start..end);
        start = end;
    }
    out
}
