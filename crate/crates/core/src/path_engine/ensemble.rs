use rayon::prelude::*;

/// Paths per work unit. Fixed so that chunk boundaries, and hence the order
/// of every floating-point merge, do not depend on the number of workers.
pub const CHUNK_SIZE: usize = 256;

/// Evaluates `f` for every path index and returns the results in index order.
pub fn map_collect<R, F>(n_paths: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n_paths)
        .into_par_iter()
        .with_min_len(CHUNK_SIZE)
        .map(f)
        .collect()
}

/// Folds paths into per-chunk accumulators in parallel, then merges the
/// chunk accumulators sequentially in chunk order.
pub fn map_reduce<A, I, F, M>(n_paths: usize, init: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) + Sync + Send,
    M: Fn(&mut A, A),
{
    let n_chunks = n_paths.div_ceil(CHUNK_SIZE);
    let partials: Vec<A> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let hi = ((c + 1) * CHUNK_SIZE).min(n_paths);
            for i in c * CHUNK_SIZE..hi {
                fold(&mut acc, i);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in partials {
        merge(&mut total, p);
    }
    total
}
