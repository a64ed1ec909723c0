//! Data-parallel sweeps with a sequential fallback.
//!
//! With the `parallel` feature (default) sweeps fan out over rayon's pool.
//! Without it, or when [`Execution::Sequential`] is requested, they run on
//! the calling thread. Results are always returned in index order, so output
//! never depends on scheduling.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

#[inline]
pub fn is_parallel_available() -> bool {
    cfg!(feature = "parallel")
}

pub fn map_indexed<U, F>(mode: Execution, count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    match mode {
        Execution::Sequential => map_indexed_sequential(count, f),
        Execution::Parallel => map_indexed_parallel(count, f),
    }
}

pub fn map_indexed_sequential<U, F>(count: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..count).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_indexed_parallel<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed_parallel<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    map_indexed_sequential(count, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let a = map_indexed(Execution::Sequential, 1000, |i| i * i);
        let b = map_indexed(Execution::Parallel, 1000, |i| i * i);
        assert_eq!(a, b);
        assert_eq!(a[999], 999 * 999);
    }
}
