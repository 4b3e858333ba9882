//! Classification metrics and event-sequence edit distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_classes: usize,
    /// `confusion[truth][pred]`.
    pub confusion: Vec<Vec<u64>>,
    pub samples: u64,
    pub micro_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// `2PR / (P + R)` from the macro-averaged precision and recall.
    pub macro_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_edit_distance: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized_edit_rate: Option<f64>,
}

impl MetricsReport {
    pub fn with_events(mut self, pred: &[usize], truth: &[usize]) -> Self {
        let d = event_edit_distance(pred, truth);
        self.event_edit_distance = Some(d);
        self.normalized_edit_rate = Some(if truth.is_empty() {
            if pred.is_empty() { 0.0 } else { 1.0 }
        } else {
            (d as f64 / truth.len() as f64).min(1.0)
        });
        self
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Macro precision and recall average over classes that occur in the ground
/// truth; a class never predicted contributes precision 0.
pub fn compute_metrics(preds: &[usize], truths: &[usize], num_classes: usize) -> Result<MetricsReport> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch { left: preds.len(), right: truths.len() });
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("metrics need at least one sample"));
    }
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &t) in preds.iter().zip(truths) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::Param(format!("class id out of range for {num_classes} classes")));
        }
        confusion[t][p] += 1;
    }
    Ok(from_confusion(confusion))
}

pub fn from_confusion(confusion: Vec<Vec<u64>>) -> MetricsReport {
    let k = confusion.len();
    let total: u64 = confusion.iter().flatten().sum();
    let correct: u64 = (0..k).map(|c| confusion[c][c]).sum();
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut present = 0usize;
    for c in 0..k {
        let support: u64 = confusion[c].iter().sum();
        if support == 0 {
            continue;
        }
        present += 1;
        let predicted: u64 = (0..k).map(|t| confusion[t][c]).sum();
        let tp = confusion[c][c] as f64;
        recall_sum += tp / support as f64;
        if predicted > 0 {
            precision_sum += tp / predicted as f64;
        }
    }
    let (p, r) = if present > 0 {
        (precision_sum / present as f64, recall_sum / present as f64)
    } else {
        (0.0, 0.0)
    };
    MetricsReport {
        num_classes: k,
        confusion,
        samples: total,
        micro_accuracy: if total > 0 { correct as f64 / total as f64 } else { 0.0 },
        macro_precision: p,
        macro_recall: r,
        macro_f1: f1_score(p, r),
        event_edit_distance: None,
        normalized_edit_rate: None,
    }
}

/// Unit-cost Levenshtein distance between two label sequences, two-row DP.
pub fn event_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1];
        let m = compute_metrics(&y, &y, 3).unwrap();
        assert_eq!(m.micro_accuracy, 1.0);
        assert_eq!(m.macro_precision, 1.0);
        assert_eq!(m.macro_recall, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn f1_of_halves() {
        assert_eq!(f1_score(0.5, 0.5), 0.5);
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn hand_built_confusion() {
        // truth rows, pred columns
        let confusion = vec![vec![3, 1, 0], vec![2, 4, 0], vec![0, 1, 1]];
        let m = from_confusion(confusion);
        let p = (3.0 / 5.0 + 4.0 / 6.0 + 1.0 / 1.0) / 3.0;
        let r = (3.0 / 4.0 + 4.0 / 6.0 + 1.0 / 2.0) / 3.0;
        assert!((m.macro_precision - p).abs() < 1e-15);
        assert!((m.macro_recall - r).abs() < 1e-15);
        assert!((m.micro_accuracy - 8.0 / 12.0).abs() < 1e-15);
        assert_eq!(m.samples, 12);
    }

    #[test]
    fn absent_class_excluded() {
        let m = compute_metrics(&[0, 0, 1], &[0, 0, 1], 4).unwrap();
        assert_eq!(m.macro_recall, 1.0);
        assert_eq!(m.macro_precision, 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(compute_metrics(&[0], &[0, 1], 2), Err(Error::LengthMismatch { .. })));
        assert!(compute_metrics(&[], &[], 2).is_err());
        assert!(compute_metrics(&[5], &[0], 2).is_err());
    }

    #[test]
    fn relabeling_is_equivariant() {
        let mut rng = rng_for(3, &[]);
        let preds: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
        let truths: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
        let perm = [2, 0, 3, 1];
        let a = compute_metrics(&preds, &truths, 4).unwrap();
        let pp: Vec<usize> = preds.iter().map(|&c| perm[c]).collect();
        let tp: Vec<usize> = truths.iter().map(|&c| perm[c]).collect();
        let b = compute_metrics(&pp, &tp, 4).unwrap();
        assert_eq!(a.micro_accuracy, b.micro_accuracy);
        assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        for t in 0..4 {
            for p in 0..4 {
                assert_eq!(a.confusion[t][p], b.confusion[perm[t]][perm[p]]);
            }
        }
    }

    #[test]
    fn edit_distance_cases() {
        assert_eq!(event_edit_distance(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(event_edit_distance(&[0], &[0, 1]), 1);
        assert_eq!(event_edit_distance::<u8>(&[], &[]), 0);
        assert_eq!(event_edit_distance(&[1, 2], &[]), 2);
    }

    fn full_table(a: &[usize], b: &[usize]) -> usize {
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 0..=a.len() {
            d[i][0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn edit_distance_matches_full_table_and_triangle() {
        let mut rng = rng_for(5, &[]);
        let seq = |rng: &mut crate::rng::Rng| -> Vec<usize> {
            let n = rng.random_range(0..12);
            (0..n).map(|_| rng.random_range(0..4)).collect()
        };
        for _ in 0..500 {
            let a = seq(&mut rng);
            let b = seq(&mut rng);
            let c = seq(&mut rng);
            assert_eq!(event_edit_distance(&a, &b), full_table(&a, &b));
            assert!(event_edit_distance(&a, &c) <= event_edit_distance(&a, &b) + event_edit_distance(&b, &c));
        }
    }
}
