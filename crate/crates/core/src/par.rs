//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature disabled every call runs sequentially, whatever
//! mode is requested. Results are always returned in index order, so output
//! never depends on scheduling.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// Whether work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// Evaluates `f(0..n)` and collects the results in index order.
pub fn map_indexed<T, F>(mode: Parallelism, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Fills `out[i] = f(i)` in place, chunked for cache friendliness.
pub fn fill_indexed<T, F>(mode: Parallelism, out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        const CHUNK: usize = 4096;
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            for (k, slot) in chunk.iter_mut().enumerate() {
                *slot = f(c * CHUNK + k);
            }
        });
        return;
    }
    let _ = mode;
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = f(i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let a = map_indexed(Parallelism::Sequential, 10_000, |i| (i as f64).sqrt());
        let b = map_indexed(Parallelism::Parallel, 10_000, |i| (i as f64).sqrt());
        assert_eq!(a, b);
        let mut c = vec![0.0; 10_001];
        fill_indexed(Parallelism::Parallel, &mut c, |i| (i as f64).sqrt());
        assert_eq!(&c[..10_000], &a[..]);
    }
}
