use rayon::prelude::*;

/// Slices smaller than this are processed on the calling thread.
const PAR_THRESHOLD: usize = 4096;

/// Evaluates `f` on `0..len`, in parallel for large slices.
///
/// Each output depends only on its own index, so the result is identical for
/// any thread count.
pub(crate) fn map_indices<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if len >= PAR_THRESHOLD {
        (0..len).into_par_iter().map(f).collect()
    } else {
        (0..len).map(f).collect()
    }
}
