//! Data-parallel helpers. With the `parallel` feature the default entry
//! points fan out over rayon's pool; without it they run in order.

/// Always-sequential variants.
pub mod sequential {
    pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
    where
        F: Fn(usize) -> R,
    {
        (0..n).map(f).collect()
    }

    pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
    where
        F: Fn(&T) -> R,
    {
        items.iter().map(f).collect()
    }
}

#[cfg(feature = "parallel")]
pub mod parallel {
    use rayon::prelude::*;

    pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..n).into_par_iter().map(f).collect()
    }

    pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.par_iter().map(f).collect()
    }
}

#[cfg(feature = "parallel")]
pub use parallel::{map_range, map_slice};
#[cfg(not(feature = "parallel"))]
pub use sequential::{map_range, map_slice};

/// True when the default helpers run on the thread pool.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
