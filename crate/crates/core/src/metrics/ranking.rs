//! Ranking metrics: ROC-AUC (midrank ties) and average precision
//! (tied scores share one threshold bucket).

use std::cmp::Ordering;

fn desc(a: &f64, b: &f64) -> Ordering {
    b.partial_cmp(a).unwrap_or(Ordering::Equal)
}

/// Area under the ROC curve of one binary problem; `None` when either class
/// is absent.
pub fn binary_roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // Sum of ascending midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += midrank * pos_in_group as f64;
        i = j + 1;
    }
    let p = n_pos as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}

/// Average precision, `sum_k (R_k - R_{k-1}) P_k` over the descending
/// sweep of distinct scores; `None` without positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|l| **l).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| desc(&scores[a], &scores[b]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_inverted() {
        assert_eq!(binary_roc_auc(&[0.9, 0.1], &[true, false]), Some(1.0));
        assert_eq!(binary_roc_auc(&[0.9, 0.1], &[false, true]), Some(0.0));
        assert_eq!(average_precision(&[0.9, 0.1], &[true, false]), Some(1.0));
        assert_eq!(binary_roc_auc(&[0.5, 0.5], &[true, true]), None);
        assert_eq!(average_precision(&[0.5], &[false]), None);
    }

    #[test]
    fn constant_scores_give_prevalence() {
        let labels = [true, false, false, true, false];
        assert_eq!(average_precision(&[0.3; 5], &labels), Some(2.0 / 5.0));
        assert_eq!(binary_roc_auc(&[0.3; 5], &labels), Some(0.5));
    }
}
