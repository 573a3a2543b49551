//! Data-parallel map over independent work items, with a sequential fallback
//! when the `parallel` feature is disabled. Results preserve input order, so
//! downstream reductions are schedule-independent.

/// Sequential map, always available (used as the benchmark baseline).
pub fn map_items_seq<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_items<T, U, F>(items: Vec<T>, jobs: usize, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync,
{
    use rayon::prelude::*;
    if jobs == 1 {
        return map_items_seq(items, f);
    }
    let run = || items.into_par_iter().map(&f).collect();
    if jobs == 0 {
        // Default global pool.
        run()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool construction");
        pool.install(run)
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_items<T, U, F>(items: Vec<T>, _jobs: usize, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    map_items_seq(items, f)
}
