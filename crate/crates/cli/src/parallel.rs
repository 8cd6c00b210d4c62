use rayon::prelude::*;

use crate::error::{HarnessError, HarnessResult};

/// Map `f` over `items` on a pool of `jobs` threads, keeping input order.
/// Each call must be self-contained: own model, own RNG.
pub fn par_map<T, R, F>(jobs: usize, items: &[T], f: F) -> HarnessResult<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> HarnessResult<R> + Sync + Send,
{
    if jobs == 0 {
        return Err(HarnessError::Config("--jobs must be at least 1".into()));
    }
    if jobs == 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    pool.install(|| items.par_iter().map(&f).collect())
}
