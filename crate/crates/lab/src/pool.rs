//! Replica execution. Results come back in replica order whatever the worker
//! count, so every downstream reduction sees the same sequence.

use rayon::prelude::*;

use crate::error::{LabError, Result};

pub struct Pool {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl Pool {
    /// `None` uses the available hardware parallelism.
    pub fn new(workers: Option<usize>) -> Result<Self> {
        let workers = match workers {
            Some(0) => return Err(LabError::Usage("--workers must be at least 1".into())),
            Some(w) => w,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| LabError::Usage(format!("thread pool: {e}")))?;
        Ok(Pool { pool, workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// `[f(0), ..., f(count - 1)]`; the first error in index order wins.
    pub fn map<T, F>(&self, count: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> condlab_core::Result<T> + Sync,
    {
        let out: Vec<condlab_core::Result<T>> = self.pool.install(|| (0..count).into_par_iter().map(&f).collect());
        out.into_iter().map(|r| r.map_err(LabError::from)).collect()
    }
}
