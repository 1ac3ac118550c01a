use crate::error::{QaError, Result};

/// Benjamini–Hochberg step-up adjusted p-values, in input order.
pub fn bh_fdr(pvalues: &[f64]) -> Result<Vec<f64>> {
    if let Some(&p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(QaError::OutOfRange {
            what: "p-value",
            value: p,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        let scaled = pvalues[i] * (m as f64 / (rank + 1) as f64);
        running = running.min(scaled);
        adjusted[i] = running.min(1.0);
    }
    Ok(adjusted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let adj = bh_fdr(&[0.005, 0.01, 0.03, 0.04]).unwrap();
        for (a, b) in adj.iter().zip([0.02, 0.02, 0.04, 0.04]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_and_equal() {
        assert_eq!(bh_fdr(&[0.3]).unwrap(), vec![0.3]);
        assert_eq!(bh_fdr(&[0.2; 3]).unwrap(), vec![0.2; 3]);
        assert_eq!(bh_fdr(&[0.9, 0.8]).unwrap(), vec![0.9, 0.9]);
        assert!(bh_fdr(&[1.2]).is_err());
        assert!(bh_fdr(&[]).unwrap().is_empty());
    }
}
