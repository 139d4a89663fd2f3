//! Accuracy metrics over similarity logits.
//!
//! Rankings break ties towards the lower class id, so a row of equal logits
//! predicts class 0.

use crate::error::{Error, Result};
use crate::ndmath::Tensor;

fn check(logits: &Tensor, targets: &[usize]) -> Result<(usize, usize)> {
    if logits.rank() != 2 {
        return Err(Error::Contract(format!("logits must be [n, m], got {:?}", logits.shape())));
    }
    let (n, m) = (logits.shape()[0], logits.shape()[1]);
    if n != targets.len() {
        return Err(Error::Contract(format!("{n} logit rows but {} targets", targets.len())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= m) {
        return Err(Error::Contract(format!("target {t} outside {m} classes")));
    }
    Ok((n, m))
}

/// Position of `target` in the row's ranking (0 = predicted class).
pub fn rank_of(row: &[f64], target: usize) -> usize {
    let t = row[target];
    row.iter()
        .enumerate()
        .filter(|&(j, &x)| x > t || (x == t && j < target))
        .count()
}

/// Highest-scoring class of a row, lowest id on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = j;
        }
    }
    best
}

pub fn predictions(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows()).map(|i| argmax(logits.row(i))).collect()
}

/// Fraction of rows whose target is among the `k` highest logits.
pub fn top_k_accuracy(logits: &Tensor, targets: &[usize], k: usize) -> Result<f64> {
    let (n, m) = check(logits, targets)?;
    if k == 0 || k > m {
        return Err(Error::Config(format!("top-k needs 1 <= k <= {m}, got {k}")));
    }
    if n == 0 {
        return Err(Error::Contract("accuracy of an empty evaluation set".into()));
    }
    let hits = targets
        .iter()
        .enumerate()
        .filter(|&(i, &t)| rank_of(logits.row(i), t) < k)
        .count();
    Ok(hits as f64 / n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanClassAccuracy {
    pub value: f64,
    /// Class columns with no evaluation sample; left out of the mean.
    pub empty_classes: Vec<usize>,
}

impl MeanClassAccuracy {
    pub fn has_empty_classes(&self) -> bool {
        !self.empty_classes.is_empty()
    }
}

/// Unweighted mean over classes of per-class top-1 accuracy.
pub fn mean_class_accuracy(logits: &Tensor, targets: &[usize]) -> Result<MeanClassAccuracy> {
    let (_, m) = check(logits, targets)?;
    let mut hits = vec![0usize; m];
    let mut totals = vec![0usize; m];
    for (i, &t) in targets.iter().enumerate() {
        totals[t] += 1;
        if argmax(logits.row(i)) == t {
            hits[t] += 1;
        }
    }
    let present: Vec<usize> = (0..m).filter(|&c| totals[c] > 0).collect();
    if present.is_empty() {
        return Err(Error::Contract("accuracy of an empty evaluation set".into()));
    }
    let value = present.iter().map(|&c| hits[c] as f64 / totals[c] as f64).sum::<f64>() / present.len() as f64;
    Ok(MeanClassAccuracy {
        value,
        empty_classes: (0..m).filter(|&c| totals[c] == 0).collect(),
    })
}

/// `2us / (u + s)`, and 0 when both are 0.
pub fn harmonic_mean(u: f64, s: f64) -> f64 {
    if u + s == 0.0 {
        0.0
    } else {
        2.0 * u * s / (u + s)
    }
}

/// Unseen and seen mean-class accuracy over a joint label space.
/// `unseen[j]` marks the unseen columns; each side only counts its own rows.
pub fn seen_unseen_accuracy(logits: &Tensor, targets: &[usize], unseen: &[bool]) -> Result<(f64, f64)> {
    let (_, m) = check(logits, targets)?;
    if unseen.len() != m {
        return Err(Error::Contract(format!("{} column flags for {m} classes", unseen.len())));
    }
    let side = |want: bool| -> Result<f64> {
        let rows: Vec<usize> = (0..targets.len()).filter(|&i| unseen[targets[i]] == want).collect();
        let sub_logits = Tensor::new(
            &[rows.len(), m],
            rows.iter().flat_map(|&i| logits.row(i).to_vec()).collect(),
        )?;
        let sub_targets: Vec<usize> = rows.iter().map(|&i| targets[i]).collect();
        Ok(mean_class_accuracy(&sub_logits, &sub_targets)?.value)
    };
    Ok((side(true)?, side(false)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn aligned_logits_are_perfect() {
        let l = logits(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        for k in 1..=3 {
            assert_eq!(top_k_accuracy(&l, &[0, 1, 2], k).unwrap(), 1.0);
        }
    }

    #[test]
    fn k_equal_m_is_always_one() {
        let l = logits(&[vec![0.3, 0.9], vec![0.8, 0.1]]);
        assert_eq!(top_k_accuracy(&l, &[0, 1], 2).unwrap(), 1.0);
    }

    #[test]
    fn two_of_three_correct() {
        let l = logits(&[vec![2.0, 1.0, 0.0], vec![0.0, 3.0, 1.0], vec![5.0, 0.0, 1.0]]);
        let acc = top_k_accuracy(&l, &[0, 1, 2], 1).unwrap();
        assert_eq!(acc, 2.0 / 3.0);
        assert!((acc - 0.6667).abs() < 1e-4);
    }

    #[test]
    fn ties_go_to_the_lower_id() {
        let l = logits(&[vec![1.0, 1.0, 1.0]]);
        assert_eq!(argmax(l.row(0)), 0);
        assert_eq!(top_k_accuracy(&l, &[0], 1).unwrap(), 1.0);
        assert_eq!(top_k_accuracy(&l, &[2], 2).unwrap(), 0.0);
        assert_eq!(top_k_accuracy(&l, &[1], 2).unwrap(), 1.0);
    }

    #[test]
    fn k_out_of_range_is_rejected() {
        let l = logits(&[vec![1.0, 0.0]]);
        assert!(top_k_accuracy(&l, &[0], 3).is_err());
        assert!(top_k_accuracy(&l, &[0], 0).is_err());
    }

    #[test]
    fn mean_class_differs_from_top1_on_imbalance() {
        let mut rows = vec![vec![1.0, 0.0]];
        rows.extend(std::iter::repeat_n(vec![1.0, 0.0], 99));
        let mut targets = vec![0];
        targets.extend(std::iter::repeat_n(1, 99));
        let l = logits(&rows);
        assert_eq!(mean_class_accuracy(&l, &targets).unwrap().value, 0.5);
        assert!((top_k_accuracy(&l, &targets, 1).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn mean_class_equals_top1_when_balanced() {
        let l = logits(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
        let t = [0, 0, 1, 1];
        assert_eq!(
            mean_class_accuracy(&l, &t).unwrap().value,
            top_k_accuracy(&l, &t, 1).unwrap()
        );
    }

    #[test]
    fn empty_class_is_flagged() {
        let l = logits(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let r = mean_class_accuracy(&l, &[0, 2]).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.empty_classes, vec![1]);
    }

    #[test]
    fn harmonic_mean_reference_rows() {
        assert!((harmonic_mean(52.8, 57.8) - 55.1).abs() <= 0.1);
        assert!((harmonic_mean(23.1, 55.1) - 32.5).abs() <= 0.1);
        assert!((harmonic_mean(0.4, 0.4) - 0.4).abs() < 1e-15);
        assert_eq!(harmonic_mean(0.0, 0.7), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
    }

    #[test]
    fn seen_only_predictor_has_zero_unseen_accuracy() {
        // Columns 0,1 seen, 2,3 unseen; every row predicts column 0.
        let l = logits(&vec![vec![1.0, 0.0, 0.0, 0.0]; 4]);
        let (u, s) = seen_unseen_accuracy(&l, &[0, 1, 2, 3], &[false, false, true, true]).unwrap();
        assert_eq!(u, 0.0);
        assert_eq!(s, 0.5);
        assert_eq!(harmonic_mean(u, s), 0.0);
    }
}
