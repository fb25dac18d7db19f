//! Data-parallel map with a sequential fallback.
//!
//! Every helper returns results in input order, so output never depends on
//! the thread count. With the `parallel` feature disabled, [`Exec::Parallel`]
//! silently runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Maps `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Exec::Parallel => items.par_iter().map(f).collect(),
        Exec::Sequential => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(_exec: Exec, items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    map(exec, &idx, |&i| f(i))
}

/// Maps `f` over `items` and then folds the results strictly left to right.
///
/// The reduction order is fixed regardless of `exec`, which keeps floating
/// point sums bit-identical between sequential and parallel runs.
pub fn map_fold<T, R, A, F, G>(exec: Exec, items: &[T], f: F, init: A, mut fold: G) -> A
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
    G: FnMut(A, R) -> A,
{
    map(exec, items, f).into_iter().fold(init, &mut fold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let p = map_fold(Exec::Parallel, &xs, |x| x * 1.5, 0.0, |a, r| a + r);
        let s = map_fold(Exec::Sequential, &xs, |x| x * 1.5, 0.0, |a, r| a + r);
        assert_eq!(p.to_bits(), s.to_bits());
        assert_eq!(map_range(Exec::Parallel, 5, |i| i * i), vec![0, 1, 4, 9, 16]);
    }
}
