//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the maps run on the rayon pool; without it, or
//! after [`set_sequential`]`(true)`, they run in a plain loop. Every reduction
//! collects per-index results first and folds them in index order, so the
//! numbers do not depend on the thread count.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Route all maps through the sequential path (used by the benches and by the
/// `--workers 1` CLI setting).
pub fn set_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::SeqCst);
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// `(0..n).map(f).collect()`, possibly in parallel. Output order is index order.
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Apply `f` to each chunk of `data` of length `chunk` (the last one may be short).
pub fn for_each_chunk<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            use rayon::prelude::*;
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

/// Deterministic sum of `f(i)` for `i < n`: partial sums over fixed blocks,
/// folded in block order.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    const BLOCK: usize = 64;
    let blocks = n.div_ceil(BLOCK);
    map(blocks, |b| {
        let hi = ((b + 1) * BLOCK).min(n);
        (b * BLOCK..hi).map(&f).sum::<f64>()
    })
    .into_iter()
    .sum()
}

/// Run `f` on a dedicated pool of `workers` threads (sequentially if 1).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers <= 1 {
        let prev = FORCE_SEQUENTIAL.swap(true, Ordering::SeqCst);
        let out = f();
        FORCE_SEQUENTIAL.store(prev, Ordering::SeqCst);
        return out;
    }
    #[cfg(feature = "parallel")]
    {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(f);
        }
    }
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_keeps_index_order() {
        let v = map(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn sum_matches_sequential_fold() {
        let f = |i: usize| 1.0 / (1.0 + i as f64).powi(2);
        let a = sum(10_000, f);
        let b = with_workers(1, || sum(10_000, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn chunks_cover_everything() {
        let mut v = vec![0usize; 1003];
        for_each_chunk(&mut v, 100, |i, c| {
            for (k, x) in c.iter_mut().enumerate() {
                *x = i * 100 + k;
            }
        });
        assert!(v.iter().enumerate().all(|(i, &x)| x == i));
    }
}
