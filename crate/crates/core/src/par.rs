//! Parallel dispatch point.
//!
//! All data-parallel loops in the crate go through these helpers. With the
//! `parallel` feature (default) they run on rayon; without it they fall back
//! to plain iterators. Callers are written so that results are bitwise
//! identical in both builds: per-item work is pure, ordering is preserved by
//! indexed collection, and any floating-point reduction happens outside these
//! helpers in a fixed order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over a slice, preserving order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
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

/// Map a fallible `f` over a slice, preserving order; first error wins.
pub fn try_map_slice<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync + Send,
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

/// Map `f` over `0..n`, preserving order.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
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
    fn map_slice_preserves_order() {
        let xs: Vec<u32> = (0..1000).collect();
        let ys = map_slice(&xs, |x| x * 2);
        assert_eq!(ys, xs.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn try_map_slice_propagates_error() {
        let xs = [1, 2, 3];
        let r: Result<Vec<i32>, String> =
            try_map_slice(&xs, |&x| if x == 2 { Err("two".into()) } else { Ok(x) });
        assert!(r.is_err());
    }
}
