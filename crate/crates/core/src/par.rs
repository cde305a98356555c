//! Data-parallel helpers.
//!
//! With the `parallel` feature (on by default) the inner loops of indexing,
//! exhaustive vector search, evaluation and verification fan out over rayon.
//! Without it every helper runs sequentially. Output order never depends on
//! the execution mode.

/// Execution strategy for a data-parallel loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Parallel over at most `max_threads` workers (`None` = rayon's global pool).
    Parallel {
        max_threads: Option<usize>,
    },
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel { max_threads: None }
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Parallel execution bounded by `limit` concurrent workers; a limit of 1
    /// is sequential.
    pub fn bounded(limit: usize) -> Self {
        if limit <= 1 {
            Exec::Sequential
        } else {
            Exec::Parallel {
                max_threads: Some(limit),
            }
        }
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && matches!(self, Exec::Parallel { .. })
    }
}

/// Maps `f` over `items`, preserving input order in the output.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel { max_threads } if items.len() > 1 => {
            use rayon::prelude::*;
            match max_threads {
                None => items.par_iter().map(f).collect(),
                Some(n) => match pool(n) {
                    Some(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                    None => items.iter().map(f).collect(),
                },
            }
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Bounded pools are built once per size and reused.
#[cfg(feature = "parallel")]
fn pool(threads: usize) -> Option<std::sync::Arc<rayon::ThreadPool>> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};

    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|p| p.into_inner());
    if let Some(p) = pools.get(&threads) {
        return Some(Arc::clone(p));
    }
    let p = Arc::new(rayon::ThreadPoolBuilder::new().num_threads(threads).build().ok()?);
    pools.insert(threads, Arc::clone(&p));
    Some(p)
}

/// Like [`map`] for fallible work. Every item is attempted; the first error in
/// input order is returned together with the number of items that succeeded.
pub fn try_map<T, R, E, F>(exec: Exec, items: &[T], f: F) -> Result<Vec<R>, (E, usize)>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    let results = map(exec, items, f);
    let completed = results.iter().filter(|r| r.is_ok()).count();
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(v) => out.push(v),
            Err(e) => return Err((e, completed)),
        }
    }
    Ok(out)
}
