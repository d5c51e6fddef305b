//! Worker count resolution and an order-preserving parallel map.

use std::thread;

pub const WORKERS_ENV: &str = "GMF_WORKERS";

/// The `--workers` flag if given, else `GMF_WORKERS`, else 1.
pub fn resolve(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var(WORKERS_ENV).ok()?.trim().parse().ok()).unwrap_or(1).max(1)
}

/// `items.map(f)` spread over `workers` threads, results in input order.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let mut states = vec![(); workers.clamp(1, items.len().max(1))];
    par_map_with(items, &mut states, |_, item| f(item))
}

/// Like [`par_map`] with one thread per element of `states`: item `i` is
/// handled by the thread owning `states[i % states.len()]`.
pub fn par_map_with<S, T, R, F>(items: &[T], states: &mut [S], f: F) -> Vec<R>
where
    S: Send,
    T: Sync,
    R: Send,
    F: Fn(&mut S, &T) -> R + Sync,
{
    assert!(!states.is_empty(), "at least one worker");
    let n = states.len();
    if n == 1 {
        return items.iter().map(|t| f(&mut states[0], t)).collect();
    }
    let f = &f;
    let mut parts: Vec<Vec<R>> = thread::scope(|s| {
        let handles: Vec<_> = states
            .iter_mut()
            .enumerate()
            .map(|(w, state)| s.spawn(move || items.iter().skip(w).step_by(n).map(|t| f(state, t)).collect::<Vec<R>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut iters: Vec<_> = parts.iter_mut().map(|p| p.drain(..)).collect();
    (0..items.len()).map(|i| iters[i % n].next().expect("one result per item")).collect()
}
