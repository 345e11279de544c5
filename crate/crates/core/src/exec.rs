//! Data-parallel execution over batch slots and clips.
//!
//! With the `parallel` feature and more than one worker, work runs on a
//! dedicated rayon pool; otherwise it runs in order on the calling thread.
//! Results always come back in input order, and callers reduce them
//! sequentially, so output never depends on the worker count.

use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;
#[cfg(feature = "parallel")]
use std::sync::Arc;

#[derive(Clone)]
pub struct Executor {
    workers: usize,
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("workers", &self.workers)
            .field("parallel", &self.is_parallel())
            .finish()
    }
}

impl Executor {
    /// `workers = 0` picks the available parallelism.
    pub fn new(workers: usize) -> Result<Self> {
        let workers = if workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            workers
        };
        #[cfg(feature = "parallel")]
        {
            let pool = if workers > 1 {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .thread_name(|i| format!("blackfx-worker-{i}"))
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
                Some(Arc::new(pool))
            } else {
                None
            };
            Ok(Self { workers, pool })
        }
        #[cfg(not(feature = "parallel"))]
        {
            if workers > 1 {
                log::warn!("built without the `parallel` feature; running {workers} workers sequentially");
            }
            Ok::<_, Error>(Self { workers })
        }
    }

    pub fn sequential() -> Self {
        Self {
            workers: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// `f(i, &items[i])` for every item, results in order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect());
        }
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }

    /// `f(i, &mut items[i])` for every item, results in order.
    pub fn map_mut<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect());
        }
        items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
    }

    /// Like [`Executor::map`] but stops at the first error (in input order).
    pub fn try_map<T, R, F>(&self, items: &[T], f: F) -> Result<Vec<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> Result<R> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }

    pub fn try_map_mut<T, R, F>(&self, items: &mut [T], f: F) -> Result<Vec<R>>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> Result<R> + Sync + Send,
    {
        self.map_mut(items, f).into_iter().collect()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_keep_input_order() {
        let items: Vec<u64> = (0..100).collect();
        for workers in [1, 3] {
            let ex = Executor::new(workers).unwrap();
            let out = ex.map(&items, |i, v| (i as u64) * 1000 + v);
            assert_eq!(out, (0..100).map(|v| v * 1001).collect::<Vec<_>>());
            let mut m = items.clone();
            ex.map_mut(&mut m, |_, v| *v *= 2);
            assert_eq!(m[99], 198);
        }
    }

    #[test]
    fn first_error_wins() {
        let ex = Executor::new(2).unwrap();
        let r = ex.try_map(&[1, 2, 3, 4], |_, &v| {
            if v >= 2 {
                Err(Error::Contract(format!("item {v}")))
            } else {
                Ok(v)
            }
        });
        assert!(matches!(r, Err(Error::Contract(m)) if m == "item 2"));
    }
}
