//! Deterministic fan-out over scoped threads.
//!
//! Work items are split into contiguous chunks, one per worker, and results
//! are returned in input order. Reductions over the returned vector are
//! therefore independent of the worker count, which keeps multi-threaded
//! runs bit-identical to single-threaded ones as long as the per-item work
//! is itself deterministic.

/// Applies `f` to `0..n` and collects results in index order, using up to
/// `threads` OS threads. `threads <= 1` runs inline.
pub fn map_ordered<R, F>(n: usize, threads: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    if threads <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let workers = threads.min(n);
    let chunk = n.div_ceil(workers);
    let mut slots: Vec<Option<R>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut rest = slots.as_mut_slice();
        let mut start = 0usize;
        while start < n {
            let take = chunk.min(n - start);
            let (head, tail) = rest.split_at_mut(take);
            rest = tail;
            let begin = start;
            let f = &f;
            scope.spawn(move || {
                for (off, slot) in head.iter_mut().enumerate() {
                    *slot = Some(f(begin + off));
                }
            });
            start += take;
        }
    });
    slots.into_iter().map(|s| s.expect("worker filled slot")).collect()
}

/// Applies `f` to every item of `items` in place, using up to `threads` OS
/// threads. Each item is visited by exactly one worker. `threads <= 1` runs
/// inline.
pub fn for_each_mut<T, E, F>(items: &mut [T], threads: usize, f: F) -> Result<(), E>
where
    T: Send,
    E: Send,
    F: Fn(usize, &mut T) -> Result<(), E> + Sync,
{
    let n = items.len();
    if threads <= 1 || n <= 1 {
        for (i, item) in items.iter_mut().enumerate() {
            f(i, item)?;
        }
        return Ok(());
    }
    let workers = threads.min(n);
    let chunk = n.div_ceil(workers);
    let mut failures: Vec<Option<E>> = Vec::new();
    failures.resize_with(workers, || None);
    std::thread::scope(|scope| {
        let mut rest = items;
        let mut start = 0usize;
        for failure in failures.iter_mut() {
            if start >= n {
                break;
            }
            let take = chunk.min(n - start);
            let (head, tail) = rest.split_at_mut(take);
            rest = tail;
            let begin = start;
            let f = &f;
            scope.spawn(move || {
                for (off, item) in head.iter_mut().enumerate() {
                    if let Err(e) = f(begin + off, item) {
                        *failure = Some(e);
                        return;
                    }
                }
            });
            start += take;
        }
    });
    // First failure in item order; workers own contiguous chunks.
    for failure in failures {
        if let Some(e) = failure {
            return Err(e);
        }
    }
    Ok(())
}
