use serde::{Deserialize, Serialize};

use crate::domain::N_STYLES;
use crate::error::{Error, Result};

pub type Confusion = [[u64; N_STYLES]; N_STYLES];

/// Rows of `confusion` are truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: Confusion,
}

pub fn trace(c: &Confusion) -> u64 {
    (0..N_STYLES).map(|i| c[i][i]).sum()
}

pub fn total(c: &Confusion) -> u64 {
    c.iter().flatten().sum()
}

/// Accuracy exactly as `trace / sum` of the confusion matrix.
pub fn accuracy_of(c: &Confusion) -> f64 {
    trace(c) as f64 / total(c) as f64
}

/// Unweighted mean of per-class F1 over the classes present in the truth.
pub fn macro_f1_of(c: &Confusion) -> f64 {
    let mut sum = 0.0;
    let mut present = 0;
    for k in 0..N_STYLES {
        let support: u64 = c[k].iter().sum();
        if support == 0 {
            continue;
        }
        present += 1;
        let tp = c[k][k];
        let predicted: u64 = (0..N_STYLES).map(|r| c[r][k]).sum();
        // 2tp / (2tp + fp + fn)
        let denom = support + predicted;
        if tp > 0 {
            sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    sum / present as f64
}

pub fn compute_metrics(truth: &[usize], pred: &[usize]) -> Result<Metrics> {
    if truth.len() != pred.len() {
        return Err(Error::Contract(format!(
            "{} truth label(s) but {} prediction(s)",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Contract("metrics need at least one label".into()));
    }
    let mut confusion = [[0u64; N_STYLES]; N_STYLES];
    for (i, (&t, &p)) in truth.iter().zip(pred).enumerate() {
        if t >= N_STYLES || p >= N_STYLES {
            return Err(Error::Contract(format!(
                "label pair ({t}, {p}) at position {i} is outside 0..{N_STYLES}"
            )));
        }
        confusion[t][p] += 1;
    }
    Ok(Metrics {
        accuracy: accuracy_of(&confusion),
        macro_f1: macro_f1_of(&confusion),
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y: Vec<usize> = (0..40).map(|i| i % N_STYLES).collect();
        let m = compute_metrics(&y, &y).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        for (i, row) in m.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 5 } else { 0 });
            }
        }
    }

    #[test]
    fn hand_computed_f1() {
        let m = compute_metrics(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(m.accuracy, 0.75);
        // class 0: p = 1/2, r = 1 → 2/3; class 1: p = 1, r = 2/3 → 0.8
        let expected = (2.0 / 3.0 + 0.8) / 2.0;
        assert!((m.macro_f1 - expected).abs() < 1e-15);
        assert!((m.macro_f1 - 0.7333).abs() < 1e-4);
    }

    #[test]
    fn class_never_predicted_counts_as_zero() {
        let m = compute_metrics(&[0, 1], &[0, 0]).unwrap();
        // class 0: p = 1/2, r = 1 → 2/3; class 1 present, never hit → 0
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn predicted_but_absent_class_is_ignored() {
        let m = compute_metrics(&[0, 0], &[0, 5]).unwrap();
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn row_sums_are_truth_counts() {
        let truth = [0, 0, 3, 3, 3, 7];
        let pred = [1, 0, 3, 2, 3, 7];
        let m = compute_metrics(&truth, &pred).unwrap();
        let rows: Vec<u64> = m.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, vec![2, 0, 0, 3, 0, 0, 0, 1]);
        assert_eq!(m.accuracy, trace(&m.confusion) as f64 / total(&m.confusion) as f64);
    }

    #[test]
    fn contract_errors() {
        assert!(matches!(compute_metrics(&[0], &[8]), Err(Error::Contract(_))));
        assert!(matches!(compute_metrics(&[0, 1], &[0]), Err(Error::Contract(_))));
        assert!(matches!(compute_metrics(&[], &[]), Err(Error::Contract(_))));
    }
}
