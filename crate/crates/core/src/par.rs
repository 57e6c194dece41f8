//! Data-parallel helpers with a sequential path.
//!
//! With the `parallel` feature (the default) work is spread over the rayon
//! pool unless the caller asks for [`Parallelism::Sequential`]. Without the
//! feature everything runs on the calling thread. Results always come back
//! in input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    #[default]
    Parallel,
    Sequential,
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// `f(i)` for every `i < n`, in index order.
pub fn map_range<R, F>(mode: Parallelism, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

pub fn map_slice<T, R, F>(mode: Parallelism, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_range(mode, items.len(), |i| f(&items[i]))
}

/// Runs `f` inside a pool of `workers` threads (the global pool when `None`).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree() {
        let a = map_range(Parallelism::Parallel, 100, |i| i * i);
        let b = map_range(Parallelism::Sequential, 100, |i| i * i);
        assert_eq!(a, b);
        assert_eq!(map_slice(Parallelism::Parallel, &[3, 1, 2], |x| x + 1), vec![4, 2, 3]);
        assert_eq!(with_workers(Some(2), || 5), 5);
    }
}
