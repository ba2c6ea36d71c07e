//! A fixed-size worker pool whose maps preserve input order.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub struct Workers {
    pool: rayon::ThreadPool,
    jobs: usize,
}

impl Workers {
    /// `jobs == 0` means one worker per available core.
    pub fn new(jobs: usize) -> Result<Self> {
        let jobs = if jobs == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            jobs
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::config(format!("cannot start {jobs} workers: {e}")))?;
        Ok(Workers { pool, jobs })
    }

    pub fn serial() -> Self {
        Self::new(1).expect("a single worker thread can always be started")
    }

    pub fn jobs(&self) -> usize {
        self.jobs
    }

    /// `f(index, item)` for every item; results come back in input order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        if self.jobs == 1 {
            return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
        }
        self.pool
            .install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..500).collect();
        let w = Workers::new(4).unwrap();
        let out = w.map(&items, |i, &x| (i as u64) * 1000 + x * x);
        let serial = Workers::serial().map(&items, |i, &x| (i as u64) * 1000 + x * x);
        assert_eq!(out, serial);
    }
}
