//! Data-parallel kernels with a sequential fallback.
//!
//! With the `parallel` feature the loops run on the rayon pool; without it
//! they run on the calling thread. Reductions are split into fixed-size
//! chunks whose partial sums are combined left to right, so the result is
//! bitwise identical for every thread count and for both builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Reduction chunk length. Changing it changes rounding, not results.
pub const CHUNK: usize = 2048;

#[inline]
fn dot_serial(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deterministic dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    {
        if a.len() > CHUNK {
            let partial: Vec<f64> = a
                .par_chunks(CHUNK)
                .zip(b.par_chunks(CHUNK))
                .map(|(x, y)| dot_serial(x, y))
                .collect();
            return partial.iter().sum();
        }
    }
    dot_chunked_serial(a, b)
}

/// Same chunking as [`dot`], always on the calling thread.
pub fn dot_chunked_serial(a: &[f64], b: &[f64]) -> f64 {
    a.chunks(CHUNK)
        .zip(b.chunks(CHUNK))
        .map(|(x, y)| dot_serial(x, y))
        .sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y[i] = f(i)` for every index.
pub fn fill_indexed<F>(y: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        y.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }
    #[cfg(not(feature = "parallel"))]
    {
        y.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    #[cfg(feature = "parallel")]
    {
        y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, xi)| *yi += alpha * xi);
    }
    #[cfg(not(feature = "parallel"))]
    {
        y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
    }
}

/// Order-preserving parallel map over a slice.
pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f` on a pool with `threads` workers (0 = library default).
/// Without the `parallel` feature `f` simply runs inline.
pub fn with_threads<R, F>(threads: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if threads == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
