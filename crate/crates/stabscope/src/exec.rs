use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use stabscope_core::Executor;

/// Runs work items on a dedicated rayon pool. Results keep input order.
pub struct Pool {
    pool: ThreadPool,
}

impl Pool {
    /// `jobs = 0` uses one thread per core.
    pub fn new(jobs: usize) -> Self {
        let pool = ThreadPoolBuilder::new()
            .num_threads(jobs)
            .thread_name(|i| format!("stabscope-{i}"))
            .build()
            .expect("thread pool");
        Self { pool }
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        self.pool.install(|| items.into_par_iter().map(f).collect())
    }
}
