//! Chunk-level work distribution.
//!
//! Every helper here produces results whose arithmetic depends only on the
//! chunk boundaries, never on how many workers run them, so serial and
//! parallel execution are bit-identical.

use alloc::vec::Vec;
use core::ops::Range;

#[cfg(feature = "std")]
use rayon::prelude::*;

use crate::scan::ChunkPlan;

#[inline]
pub(crate) fn chunk_range(plan: &ChunkPlan, len: usize, chunk: usize) -> Range<usize> {
    let size = plan.chunk_size();
    let lo = chunk.saturating_mul(size).min(len);
    let hi = lo.saturating_add(size).min(len);
    lo..hi
}

#[cfg(feature = "std")]
#[inline]
fn run_parallel(plan: &ChunkPlan, chunks: usize) -> bool {
    plan.worker_count() > 1 && chunks > 1
}

/// Maps every chunk of `0..len` through `f`, returning results in chunk order.
pub(crate) fn map_chunks<T, F>(plan: &ChunkPlan, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, Range<usize>) -> T + Sync + Send,
{
    let chunks = plan.chunk_count(len);
    #[cfg(feature = "std")]
    if run_parallel(plan, chunks) {
        return (0..chunks)
            .into_par_iter()
            .map(|c| f(c, chunk_range(plan, len, c)))
            .collect();
    }
    (0..chunks).map(|c| f(c, chunk_range(plan, len, c))).collect()
}

/// Hands each worker a disjoint mutable chunk of `out` together with the
/// chunk index and its offset into the full array.
pub(crate) fn for_each_chunk_mut<F>(plan: &ChunkPlan, out: &mut [f64], f: F)
where
    F: Fn(usize, usize, &mut [f64]) + Sync + Send,
{
    let size = plan.chunk_size();
    let chunks = plan.chunk_count(out.len());
    #[cfg(feature = "std")]
    if run_parallel(plan, chunks) {
        out.par_chunks_mut(size)
            .enumerate()
            .for_each(|(c, slice)| f(c, c * size, slice));
        return;
    }
    let _ = chunks;
    for (c, slice) in out.chunks_mut(size).enumerate() {
        f(c, c * size, slice);
    }
}

/// Three-lane variant of [`for_each_chunk_mut`]; all lanes must share a length.
pub(crate) fn for_each_chunk_mut3<F>(
    plan: &ChunkPlan,
    a: &mut [f64],
    b: &mut [f64],
    c: &mut [f64],
    f: F,
) where
    F: Fn(usize, usize, &mut [f64], &mut [f64], &mut [f64]) + Sync + Send,
{
    debug_assert!(a.len() == b.len() && b.len() == c.len());
    let size = plan.chunk_size();
    let chunks = plan.chunk_count(a.len());
    #[cfg(feature = "std")]
    if run_parallel(plan, chunks) {
        a.par_chunks_mut(size)
            .zip(b.par_chunks_mut(size))
            .zip(c.par_chunks_mut(size))
            .enumerate()
            .for_each(|(k, ((x, y), z))| f(k, k * size, x, y, z));
        return;
    }
    let _ = chunks;
    for (k, ((x, y), z)) in a
        .chunks_mut(size)
        .zip(b.chunks_mut(size))
        .zip(c.chunks_mut(size))
        .enumerate()
    {
        f(k, k * size, x, y, z);
    }
}

/// Runs `f` over `0..count` on up to `workers` threads, collecting in index
/// order. Used for independent tasks such as cross-validation replicates.
pub(crate) fn map_tasks<T, F>(workers: usize, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "std")]
    if workers > 1 && count > 1 {
        let run = || (0..count).into_par_iter().map(&f).collect::<Vec<T>>();
        return match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        };
    }
    let _ = workers;
    (0..count).map(f).collect()
}
