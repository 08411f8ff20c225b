//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper preserves input order in its output, and callers reduce the
//! returned values sequentially, so results are bit-identical between
//! [`Exec::Sequential`] and [`Exec::Parallel`] and across thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is on; sequential otherwise.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `(0..n).map(f)` evaluated under `exec`, collected in index order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Maps fixed-size chunks of `items`; chunk boundaries do not depend on the
/// number of worker threads.
pub fn map_chunks<I, T, F>(exec: Exec, items: &[I], chunk: usize, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(usize, &[I]) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items
            .par_chunks(chunk)
            .enumerate()
            .map(|(k, c)| f(k * chunk, c))
            .collect();
    }
    let _ = exec;
    items
        .chunks(chunk)
        .enumerate()
        .map(|(k, c)| f(k * chunk, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = map_indexed(Exec::Sequential, 1000, |i| (i as f64).sqrt());
        let par = map_indexed(Exec::Parallel, 1000, |i| (i as f64).sqrt());
        assert_eq!(seq, par);

        let xs: Vec<u32> = (0..103).collect();
        let a = map_chunks(Exec::Sequential, &xs, 10, |start, c| (start, c.len()));
        let b = map_chunks(Exec::Parallel, &xs, 10, |start, c| (start, c.len()));
        assert_eq!(a, b);
        assert_eq!(a.len(), 11);
        assert_eq!(a[10], (100, 3));
    }
}
