//! Binary classification metrics over sigmoid scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    BalancedAccuracy,
    AucRoc,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Accuracy, MetricKind::BalancedAccuracy, MetricKind::AucRoc];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::BalancedAccuracy => "balanced_accuracy",
            MetricKind::AucRoc => "auc_roc",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn check(scores: &[f64], labels: &[usize]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::dim("metric labels", scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(Error::MetricUnavailable("empty evaluation set".into()));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Data(format!("binary metrics got label {l}")));
    }
    Ok(())
}

fn predicted(score: f64) -> usize {
    usize::from(score >= DECISION_THRESHOLD)
}

pub fn accuracy(scores: &[f64], labels: &[usize]) -> Result<f64> {
    check(scores, labels)?;
    let hits = scores.iter().zip(labels).filter(|(&s, &l)| predicted(s) == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean per-class recall over the classes present in `labels`.
pub fn balanced_accuracy(scores: &[f64], labels: &[usize]) -> Result<f64> {
    check(scores, labels)?;
    let mut hit = [0usize; 2];
    let mut total = [0usize; 2];
    for (&s, &l) in scores.iter().zip(labels) {
        total[l] += 1;
        hit[l] += usize::from(predicted(s) == l);
    }
    let recalls: Vec<f64> = (0..2)
        .filter(|&c| total[c] > 0)
        .map(|c| hit[c] as f64 / total[c] as f64)
        .collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Area under the ROC curve by the trapezoid rule, with tied scores
/// forming a single diagonal step.
pub fn auc_roc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    check(scores, labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::MetricUnavailable("auc_roc over NaN scores".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUnavailable(
            "auc_roc needs both classes in the evaluation set".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let (tp0, fp0) = (tp, fp);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
    }
    Ok(area / (pos * neg) as f64)
}

pub fn evaluate_metric(scores: &[f64], labels: &[usize], kind: MetricKind) -> Result<f64> {
    match kind {
        MetricKind::Accuracy => accuracy(scores, labels),
        MetricKind::BalancedAccuracy => balanced_accuracy(scores, labels),
        MetricKind::AucRoc => auc_roc(scores, labels),
    }
}

/// One metric across clients. Unavailable client values are `None` and are
/// left out of the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub kind: MetricKind,
    pub per_client: Vec<Option<f64>>,
    /// Unweighted mean over clients with a value.
    pub mean: Option<f64>,
}

impl MetricReport {
    pub fn new(kind: MetricKind, per_client: Vec<Option<f64>>) -> Self {
        let vals: Vec<f64> = per_client.iter().flatten().copied().collect();
        let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        Self { kind, per_client, mean }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_scores() {
        let s = [0.9, 0.8, 0.2, 0.1];
        let l = [1, 1, 0, 0];
        assert_eq!(auc_roc(&s, &l).unwrap(), 1.0);
        assert_eq!(accuracy(&s, &l).unwrap(), 1.0);
    }

    #[test]
    fn constant_scores() {
        assert_eq!(auc_roc(&[0.3; 4], &[1, 0, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn hand_enumerated() {
        let s = [0.9, 0.4, 0.6];
        let l = [1, 0, 1];
        assert_eq!(auc_roc(&s, &l).unwrap(), 1.0);
        // Every score lands on the right side of 0.5.
        assert_eq!(accuracy(&s, &l).unwrap(), 1.0);
        assert!((accuracy(&[0.9, 0.4, 0.3], &l).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_auc_unavailable() {
        assert!(matches!(
            auc_roc(&[0.1, 0.9], &[1, 1]),
            Err(Error::MetricUnavailable(_))
        ));
    }

    #[test]
    fn balanced_vs_plain() {
        // 3 positives all right, 1 negative wrong: acc 0.75, balanced 0.5.
        let s = [0.9, 0.9, 0.9, 0.9];
        let l = [1, 1, 1, 0];
        assert_eq!(accuracy(&s, &l).unwrap(), 0.75);
        assert_eq!(balanced_accuracy(&s, &l).unwrap(), 0.5);
    }

    #[test]
    fn report_mean_skips_unavailable() {
        let r = MetricReport::new(MetricKind::AucRoc, vec![Some(0.5), None, Some(1.0)]);
        assert_eq!(r.mean, Some(0.75));
    }

    // Pairwise oracle: P(s+ > s-) + 0.5·P(s+ = s-).
    fn auc_pairs(s: &[f64], l: &[usize]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] == 1 && l[j] == 0 {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(data in prop::collection::vec((0u8..6, 0usize..2), 2..40)) {
            let s: Vec<f64> = data.iter().map(|d| d.0 as f64 / 5.0).collect();
            let l: Vec<usize> = data.iter().map(|d| d.1).collect();
            prop_assume!(l.contains(&0) && l.contains(&1));
            prop_assert!((auc_roc(&s, &l).unwrap() - auc_pairs(&s, &l)).abs() < 1e-12);
        }

        #[test]
        fn auc_monotone_invariant(data in prop::collection::vec((-3.0f64..3.0, 0usize..2), 2..40)) {
            let s: Vec<f64> = data.iter().map(|d| d.0).collect();
            let l: Vec<usize> = data.iter().map(|d| d.1).collect();
            prop_assume!(l.contains(&0) && l.contains(&1));
            let t: Vec<f64> = s.iter().map(|x| (2.0 * x).exp() + 1.0).collect();
            prop_assert_eq!(auc_roc(&s, &l).unwrap(), auc_roc(&t, &l).unwrap());
        }

        #[test]
        fn balanced_equals_plain_when_balanced(data in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..20)) {
            let s: Vec<f64> = data.iter().flat_map(|d| [d.0, d.1]).collect();
            let l: Vec<usize> = (0..s.len()).map(|i| i % 2).collect();
            prop_assert!((balanced_accuracy(&s, &l).unwrap() - accuracy(&s, &l).unwrap()).abs() < 1e-12);
        }
    }
}
