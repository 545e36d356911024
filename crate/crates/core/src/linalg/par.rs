//! Data-parallel loop helpers with a sequential fallback.
//!
//! With the `parallel` feature the `*_par` variants use rayon; without it
//! they are aliases of the sequential versions. The dispatching entry points
//! (`for_each_row`, `map_collect`) pick the parallel path only above
//! [`PAR_THRESHOLD`] items, where the fork/join overhead pays off.

/// Minimum number of independent items before the parallel path is used.
pub const PAR_THRESHOLD: usize = 4096;

/// Writes `out[i] = f(i)` for every index.
pub fn for_each_row<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    if out.len() >= PAR_THRESHOLD {
        for_each_row_par(out, f)
    } else {
        for_each_row_seq(out, f)
    }
}

pub fn for_each_row_seq<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64,
{
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

#[cfg(feature = "parallel")]
pub fn for_each_row_par<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    use rayon::prelude::*;
    out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_row_par<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    for_each_row_seq(out, f)
}

/// Maps independent work items, preserving order. Used for parameter sweeps
/// (meshes, masks, preconditioner kinds) where every item is expensive.
pub fn map_collect<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Fills row-blocks of a row-major buffer in parallel: `f(row, row_slice)`.
pub fn for_each_chunk<F>(data: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if data.len() >= PAR_THRESHOLD {
            data.par_chunks_mut(row_len)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
            return;
        }
    }
    for (i, row) in data.chunks_mut(row_len).enumerate() {
        f(i, row);
    }
}
