//! Execution mode for the data-parallel loops.
//!
//! Element- and face-local work is embarrassingly parallel; results are
//! always merged in construction-index order so that the assembled matrices
//! are bit-identical across modes and across runs.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether data-parallel loops run on the rayon pool or inline.
///
/// `Parallel` falls back to sequential execution when the crate is built
/// without the `parallel` feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// Maps `0..n` through `f`, preserving index order in the output.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}

/// Sums `f(i)` over `0..n`. The reduction is associative-only (f64 sums of
/// independent chunks), so this is reserved for scalar diagnostics where the
/// last few ulps do not matter; deterministic paths use [`map_indexed`].
pub fn sum_indexed<F>(mode: ExecMode, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_indexed(mode, n, f).into_iter().sum()
}
