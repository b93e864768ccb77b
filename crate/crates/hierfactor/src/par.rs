//! Switch between rayon and sequential iteration.
//!
//! Every data-parallel loop in the crate goes through this map so the
//! `parallel` feature changes scheduling only; results come back in index
//! order either way, keeping outputs identical across both modes.

#[cfg(feature = "parallel")]
pub(crate) fn indexed_map<U, F>(len: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn indexed_map<U, F>(len: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..len).map(f).collect()
}
