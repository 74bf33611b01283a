//! Order-preserving map, parallel when the `parallel` feature is on.
//!
//! Every data-parallel site in the crate (rollout collection, per-group
//! advantage computation, grid cells) goes through [`par_map`]. Output
//! order always matches input order and downstream reductions iterate that
//! order, so a run produces identical bytes for any thread count and for
//! the sequential fallback.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Always-sequential twin of [`par_map`]; the benchmark suite compares the
/// two head to head.
pub fn seq_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_preserves_order() {
        let items: Vec<usize> = (0..1000).collect();
        let doubled = par_map(&items, |&x| x * 2);
        let expected = seq_map(&items, |&x| x * 2);
        assert_eq!(doubled, expected);
    }
}
