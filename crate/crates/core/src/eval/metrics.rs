//! Ranking metrics with members as the positive class and lower scores
//! ranked as more member-like.

use alloc::vec::Vec;

use crate::error::Result;
use crate::fsd::{check_labels, select_threshold, Label};

pub const FPR_BUDGET: f64 = 0.05;

fn split_by_label(scores: &[f64], labels: &[Label]) -> (Vec<f64>, Vec<f64>) {
    let mut members = Vec::new();
    let mut nonmembers = Vec::new();
    for (&s, &l) in scores.iter().zip(labels) {
        if l.is_member() {
            members.push(s);
        } else {
            nonmembers.push(s);
        }
    }
    (members, nonmembers)
}

/// Probability that a random member scores below a random non-member, ties
/// counting one half.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (m, n) = check_labels(scores, labels)?;
    let (members, mut nonmembers) = split_by_label(scores, labels);
    nonmembers.sort_by(f64::total_cmp);
    // twice the Mann-Whitney count, kept in integers
    let mut twice: u128 = 0;
    for s in members {
        let below_or_eq = nonmembers.partition_point(|&x| x <= s);
        let below = nonmembers.partition_point(|&x| x < s);
        let greater = (n - below_or_eq) as u128;
        let equal = (below_or_eq - below) as u128;
        twice += 2 * greater + equal;
    }
    Ok(twice as f64 / (2 * m as u128 * n as u128) as f64)
}

/// Largest true-positive rate of `score < t ⇒ member` over thresholds whose
/// false-positive rate stays within `budget`.
pub fn tpr_at_fpr(scores: &[f64], labels: &[Label], budget: f64) -> Result<f64> {
    let (m, n) = check_labels(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = 0usize;
    let mut i = 0;
    while i < idx.len() {
        let v = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == v {
            if labels[idx[i]].is_member() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if fp as f64 / n as f64 <= budget {
            best = best.max(tp);
        }
    }
    Ok(best as f64 / m as f64)
}

/// Accuracy of the best threshold chosen on these same scores.
pub fn best_accuracy(scores: &[f64], labels: &[Label]) -> Result<f64> {
    Ok(select_threshold(scores, labels)?.accuracy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;
    use Label::{Member as M, NonMember as N};

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[1.0, 2.0, 3.0, 4.0], &[M, M, N, N]).unwrap(), 1.0);
        assert_eq!(auc(&[5.0; 4], &[M, N, M, N]).unwrap(), 0.5);
        assert!(matches!(auc(&[1.0], &[M]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn tpr_examples() {
        assert_eq!(tpr_at_fpr(&[1.0, 2.0, 3.0, 4.0], &[M, M, N, N], FPR_BUDGET).unwrap(), 1.0);
        assert_eq!(tpr_at_fpr(&[3.0, 4.0, 1.0, 2.0], &[M, M, N, N], FPR_BUDGET).unwrap(), 0.0);
        assert!(tpr_at_fpr(&[1.0, 2.0], &[N, N], FPR_BUDGET).is_err());
    }

    fn pairs_oracle(scores: &[f64], labels: &[Label]) -> f64 {
        let mut twice = 0u64;
        let mut pairs = 0u64;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == M && lj == N {
                    pairs += 1;
                    twice += if scores[i] < scores[j] { 2 } else if scores[i] == scores[j] { 1 } else { 0 };
                }
            }
        }
        twice as f64 / (2 * pairs) as f64
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
        proptest::collection::vec((-20i32..20, any::<bool>()), 2..120).prop_map(|v| {
            (v.iter().map(|&(s, _)| s as f64 / 4.0).collect(), v.iter().map(|&(_, m)| if m { M } else { N }).collect())
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pairs((scores, labels) in instance()) {
            prop_assume!(labels.contains(&M) && labels.contains(&N));
            prop_assert_eq!(auc(&scores, &labels).unwrap(), pairs_oracle(&scores, &labels));
        }

        #[test]
        fn auc_invariant_under_exp((scores, labels) in instance()) {
            prop_assume!(labels.contains(&M) && labels.contains(&N));
            let e: Vec<f64> = scores.iter().map(|&s| libm::exp(s)).collect();
            prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&e, &labels).unwrap());
        }

        #[test]
        fn auc_label_flip_symmetry((scores, labels) in instance()) {
            prop_assume!(labels.contains(&M) && labels.contains(&N));
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let flipped: Vec<Label> = labels.iter().map(|&l| if l == M { N } else { M }).collect();
            prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&neg, &flipped).unwrap());
        }

        #[test]
        fn tpr_matches_sweep((scores, labels) in instance(), budget in prop_oneof![Just(0.05), 0.0f64..0.5]) {
            prop_assume!(labels.contains(&M) && labels.contains(&N));
            let m = labels.iter().filter(|l| **l == M).count();
            let n = labels.len() - m;
            let mut ts = scores.clone();
            ts.push(f64::INFINITY);
            let mut best = 0.0f64;
            for &t in &ts {
                let tp = scores.iter().zip(&labels).filter(|(&s, &l)| s < t && l == M).count();
                let fp = scores.iter().zip(&labels).filter(|(&s, &l)| s < t && l == N).count();
                if fp as f64 / n as f64 <= budget {
                    best = best.max(tp as f64 / m as f64);
                }
            }
            prop_assert_eq!(tpr_at_fpr(&scores, &labels, budget).unwrap(), best);
        }
    }
}
