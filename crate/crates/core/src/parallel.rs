//! Data-parallel helpers.
//!
//! With the `parallel` feature the helpers fan out over rayon's pool; without
//! it (or after `set_enabled(false)`) they run on the calling thread. Results
//! are collected in input order either way, so every reduction downstream is
//! performed in the same order and outputs are bit-identical across modes.

use std::sync::atomic::{AtomicBool, Ordering};

static ENABLED: AtomicBool = AtomicBool::new(true);

/// Toggle parallel execution at runtime. Has no effect when the crate was
/// built without the `parallel` feature.
pub fn set_enabled(enabled: bool) {
    ENABLED.store(enabled, Ordering::Relaxed);
}

pub fn is_enabled() -> bool {
    cfg!(feature = "parallel") && ENABLED.load(Ordering::Relaxed)
}

/// Map `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_enabled() && n > 1 {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Apply `f` to each disjoint `chunk`-sized piece of `data`, passing the chunk index.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if is_enabled() && data.len() > chunk {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}
