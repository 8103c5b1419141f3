//! Sequential / rayon dispatch for row-independent loops.
//!
//! Only loops whose iterations write disjoint outputs go through here, so the
//! `parallel` feature never changes floating-point results.

/// Apply `f(row_index, row)` to every `width`-sized chunk of `out`.
pub fn rows_mut<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
}

/// Sequential variant of [`rows_mut`], always available.
pub fn rows_mut_seq<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    if width == 0 {
        return;
    }
    out.chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
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

/// True when the crate was built with the `parallel` feature.
pub const fn enabled() -> bool {
    cfg!(feature = "parallel")
}
