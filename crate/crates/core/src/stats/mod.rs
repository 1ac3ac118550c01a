//! Paired nonparametric comparison of methods across patients.

mod compare;
mod fdr;
mod friedman;
mod wilcoxon;

pub use compare::{compare_methods, ComparisonResult, Direction, MetricMatrix, PairwiseTest};
pub use fdr::bh_fdr;
pub use friedman::{friedman, FriedmanResult};
pub use wilcoxon::{
    wilcoxon_signed_rank, wilcoxon_signed_rank_with, PMethod, WilcoxonResult, EXACT_MAX_N,
    MIN_NONZERO_PAIRS,
};

/// Mid-ranks (1-based) of `values` and the sizes of the tie groups.
pub(crate) fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j share ranks i+1..=j
        let r = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = r;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

#[cfg(test)]
mod tests {
    use super::midranks;

    #[test]
    fn midranks_with_ties() {
        let (r, t) = midranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, vec![2]);
    }
}
