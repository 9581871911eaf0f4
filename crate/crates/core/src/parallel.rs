//! Shared-memory data parallelism over index ranges.
//!
//! Work is split into uniform contiguous ranges, one per worker. Reductions
//! are computed over fixed-size blocks that do not depend on the worker
//! count and merged in index order, so results are bit-identical for any
//! number of workers.

use std::num::NonZeroUsize;
use std::ops::Range;
use std::thread;

/// Block length used by deterministic reductions.
pub const REDUCTION_BLOCK: usize = 4096;

/// Number of worker threads for data-parallel sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workers(NonZeroUsize);

impl Workers {
    pub fn new(n: usize) -> Self {
        Workers(NonZeroUsize::new(n.max(1)).unwrap())
    }

    pub const fn single() -> Self {
        Workers(NonZeroUsize::MIN)
    }

    /// One worker per available core.
    pub fn available() -> Self {
        Self::new(thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn get(self) -> usize {
        self.0.get()
    }
}

impl Default for Workers {
    fn default() -> Self {
        Self::single()
    }
}

/// Splits `0..n` into `parts` contiguous ranges whose lengths differ by at
/// most one.
pub fn partition(n: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.clamp(1, n.max(1));
    let (base, extra) = (n / parts, n % parts);
    let mut start = 0;
    (0..parts)
        .map(|p| {
            let len = base + usize::from(p < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Runs `f(start, chunk)` over disjoint contiguous chunks of `out`, where
/// `start` is the index of `chunk[0]` in `out`.
pub fn for_each_chunk<T, F>(out: &mut [T], workers: Workers, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    let ranges = partition(out.len(), workers.get());
    if ranges.len() <= 1 {
        f(0, out);
        return;
    }
    thread::scope(|s| {
        let mut rest = out;
        let f = &f;
        for r in ranges {
            let (head, tail) = rest.split_at_mut(r.len());
            rest = tail;
            s.spawn(move || f(r.start, head));
        }
    });
}

/// `out[i] = f(i)` for every index.
pub fn fill<T, F>(out: &mut [T], workers: Workers, f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    for_each_chunk(out, workers, |start, chunk| {
        for (j, v) in chunk.iter_mut().enumerate() {
            *v = f(start + j);
        }
    });
}

/// Like [`fill`], stopping at the lowest-indexed error.
pub fn try_fill<T, E, F>(out: &mut [T], workers: Workers, f: F) -> Result<(), E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync,
{
    let ranges = partition(out.len(), workers.get());
    let mut errors: Vec<Option<(usize, E)>> = (0..ranges.len()).map(|_| None).collect();
    let run = |start: usize, chunk: &mut [T], slot: &mut Option<(usize, E)>| {
        for (j, v) in chunk.iter_mut().enumerate() {
            match f(start + j) {
                Ok(x) => *v = x,
                Err(e) => {
                    *slot = Some((start + j, e));
                    return;
                }
            }
        }
    };
    thread::scope(|s| {
        let mut rest = out;
        let mut slots = errors.iter_mut();
        let run = &run;
        let first_len = ranges[0].len();
        let (first, tail) = rest.split_at_mut(first_len);
        rest = tail;
        let first_slot = slots.next().unwrap();
        for (r, slot) in ranges.into_iter().skip(1).zip(slots) {
            let (head, tail) = rest.split_at_mut(r.len());
            rest = tail;
            s.spawn(move || run(r.start, head, slot));
        }
        // the first range runs on the calling thread
        run(0, first, first_slot);
    });
    match errors.into_iter().flatten().min_by_key(|(i, _)| *i) {
        Some((_, e)) => Err(e),
        None => Ok(()),
    }
}

/// `Σ_i f(i)` over `0..n`, summed sequentially within fixed blocks and then
/// across blocks in index order.
pub fn sum<F>(n: usize, workers: Workers, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let n_blocks = n.div_ceil(REDUCTION_BLOCK);
    let mut partial = vec![0.0; n_blocks];
    fill(&mut partial, workers, |b| {
        let end = ((b + 1) * REDUCTION_BLOCK).min(n);
        (b * REDUCTION_BLOCK..end).map(&f).fold(0.0, |a, x| a + x)
    });
    partial.iter().fold(0.0, |a, x| a + x)
}

/// Deterministic weighted sum `Σ w_i x_i`.
pub fn dot(weights: &[f64], values: &[f64], workers: Workers) -> f64 {
    debug_assert_eq!(weights.len(), values.len());
    sum(values.len(), workers, |i| weights[i] * values[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_is_uniform_and_covering() {
        let parts = partition(10, 3);
        assert_eq!(parts, vec![0..4, 4..7, 7..10]);
        assert_eq!(partition(2, 8).len(), 2);
        assert_eq!(partition(0, 4), vec![0..0]);
    }

    #[test]
    fn sum_is_bit_identical_across_worker_counts() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e3 + 1e-9 * i as f64;
        let n = 100_003;
        let reference = sum(n, Workers::new(1), f);
        for w in [2, 3, 4, 8] {
            assert_eq!(sum(n, Workers::new(w), f).to_bits(), reference.to_bits());
        }
    }

    #[test]
    fn try_fill_reports_first_error() {
        let mut out = vec![0usize; 1000];
        let r = try_fill(
            &mut out,
            Workers::new(4),
            |i| if i % 300 == 299 { Err(i) } else { Ok(i) },
        );
        assert_eq!(r, Err(299));
        let mut out = vec![0usize; 10];
        try_fill::<_, (), _>(&mut out, Workers::new(3), Ok).unwrap();
        assert_eq!(out, (0..10).collect::<Vec<_>>());
    }
}
