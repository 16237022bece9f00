//! Ordered fan-out over independent work items.

use crate::error::{EhdError, Result};

/// Worker pool; with one worker everything runs on the calling thread.
pub struct Workers {
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn new(workers: usize) -> Result<Self> {
        if workers <= 1 {
            return Ok(Workers { pool: None });
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| EhdError::Config(format!("cannot start {workers} workers: {e}")))?;
        Ok(Workers { pool: Some(pool) })
    }

    pub fn single() -> Self {
        Workers { pool: None }
    }

    /// Applies `f` to every item; results come back in input order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        match &self.pool {
            None => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
            Some(pool) => {
                use rayon::prelude::*;
                pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect())
            }
        }
    }
}
