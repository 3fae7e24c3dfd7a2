//! Data-parallel execution with a sequential fallback.
//!
//! Every hot loop in the crate is an order-preserving indexed map: item `i`
//! is computed independently and results come back in index order. Floating
//! point reductions over those results are always done sequentially by the
//! caller, so output is bit-identical regardless of thread count or of which
//! mode runs.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] runs on the rayon
//! global pool. Without it, `Parallel` silently degrades to `Sequential`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// `(0..n).map(f).collect()`, possibly in parallel.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// `items.iter().map(f).collect()`, possibly in parallel.
    pub fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Applies `f` to fixed-size chunks of `rows` (each `stride` long) and
    /// returns per-chunk results in chunk order. Chunk boundaries depend only
    /// on `chunk_rows`, never on the thread count.
    pub fn map_chunks<S, T, F>(self, rows: &[S], stride: usize, chunk_rows: usize, f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(usize, &[S]) -> T + Sync + Send,
    {
        let step = stride.max(1) * chunk_rows.max(1);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return rows
                .par_chunks(step)
                .enumerate()
                .map(|(c, chunk)| f(c * chunk_rows.max(1), chunk))
                .collect();
        }
        rows.chunks(step)
            .enumerate()
            .map(|(c, chunk)| f(c * chunk_rows.max(1), chunk))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let seq = Exec::Sequential.map_range(1000, |i| (i as f64).sqrt());
        let par = Exec::Parallel.map_range(1000, |i| (i as f64).sqrt());
        assert_eq!(seq, par);

        let data: Vec<u32> = (0..103).collect();
        let a = Exec::Sequential.map_chunks(&data, 1, 10, |start, c| (start, c.iter().sum::<u32>()));
        let b = Exec::Parallel.map_chunks(&data, 1, 10, |start, c| (start, c.iter().sum::<u32>()));
        assert_eq!(a, b);
        assert_eq!(a.len(), 11);
        assert_eq!(a[10], (100, 100 + 101 + 102));
    }
}
