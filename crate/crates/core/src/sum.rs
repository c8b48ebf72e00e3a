//! Order-fixed reductions.

/// Pairwise (cascade) summation in a fixed tree order.
///
/// The result depends only on the slice contents, never on how the slice
/// was produced, so per-row partial sums computed in parallel reduce to the
/// same bits for any thread count.
pub fn pairwise(xs: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise(&xs[..mid]) + pairwise(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_exact_sums() {
        assert_eq!(pairwise(&[]), 0.0);
        let xs: Vec<f64> = (1..=1000).map(|k| k as f64).collect();
        assert_eq!(pairwise(&xs), 500_500.0);
    }

    #[test]
    fn tighter_than_naive_on_cancellation() {
        let xs: Vec<f64> = (0..100_000).map(|k| if k % 2 == 0 { 0.1 } else { 0.2 }).collect();
        let exact = 15_000.0;
        let naive: f64 = xs.iter().sum();
        assert!((pairwise(&xs) - exact).abs() <= (naive - exact).abs());
    }
}
