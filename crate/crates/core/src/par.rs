//! Data-parallel map over sample indices.
//!
//! With the `parallel` feature the work is spread over a rayon pool; without
//! it, or with [`Execution::Sequential`], indices are processed in order. The
//! output order is the index order in both cases, so results do not depend on
//! the thread count.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    #[default]
    Sequential,
    Parallel {
        threads: usize,
    },
}

impl Execution {
    pub fn threads(threads: usize) -> Self {
        if threads <= 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { threads }
        }
    }
}

/// Maps `f` over `0..n` and collects in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel { threads } => parallel_map(n, threads, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| crate::Error::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, _threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Infallible map used for table construction; runs on the global pool when available.
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_threads() {
        let f = |i: usize| Ok(i * i);
        let a = map_indexed(100, Execution::Sequential, f).unwrap();
        let b = map_indexed(100, Execution::threads(3), f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors_propagate() {
        let r = map_indexed(10, Execution::threads(2), |i| {
            if i == 7 {
                Err(crate::Error::Runtime("seven".into()))
            } else {
                Ok(i)
            }
        });
        assert!(r.is_err());
    }
}
