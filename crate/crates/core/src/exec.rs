//! Data-parallel map helpers.
//!
//! With the `parallel` feature (default) the `map_*` helpers fan out over the
//! rayon pool; without it they run on the calling thread. Results always come
//! back in input order, so reductions performed by callers are independent of
//! the thread count.

/// Sequential implementations, always available.
pub mod seq {
    pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
    where
        F: Fn(&T) -> R,
    {
        items.iter().map(f).collect()
    }

    pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
    where
        F: Fn(usize) -> R,
    {
        (0..n).map(f).collect()
    }
}

/// Rayon-backed implementations.
#[cfg(feature = "parallel")]
pub mod par {
    use rayon::prelude::*;

    pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.par_iter().map(f).collect()
    }

    pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..n).into_par_iter().map(f).collect()
    }
}

#[cfg(feature = "parallel")]
pub use par::{map_range, map_slice};
#[cfg(not(feature = "parallel"))]
pub use seq::{map_range, map_slice};

/// Number of worker threads the default executor will use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let v: Vec<usize> = (0..1000).collect();
        let out = map_slice(&v, |x| x * 2);
        assert_eq!(out, seq::map_slice(&v, |x| x * 2));
        assert_eq!(map_range(5, |i| i + 1), vec![1, 2, 3, 4, 5]);
    }
}
