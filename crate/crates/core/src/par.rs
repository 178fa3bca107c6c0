//! Order-preserving map that runs on the rayon pool when available.

#[cfg(feature = "parallel")]
pub(crate) fn par_map<X, T, F>(items: &[X], f: F) -> Vec<T>
where
    X: Sync,
    T: Send,
    F: Fn(&X) -> T + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<X, T, F>(items: &[X], f: F) -> Vec<T>
where
    F: Fn(&X) -> T,
{
    items.iter().map(f).collect()
}
