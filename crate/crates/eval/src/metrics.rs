use serde::{Deserialize, Serialize};

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs ordered
/// correctly, ties counted half. `None` unless both classes occur.
///
/// Runs in O(n log n) via average ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of (1-based, tie-averaged) ranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Binary F1 at `score >= threshold`; 0 when precision + recall is 0.
/// `None` when the class has no actual positives.
pub fn f1(scores: &[f64], labels: &[bool], threshold: f64) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp + fneg == 0 {
        return None;
    }
    if tp == 0 {
        return Some(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fneg) as f64;
    Some(2.0 * precision * recall / (precision + recall))
}

/// Per-class values plus their unweighted mean over the classes that could
/// be evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroMetric {
    pub per_class: Vec<Option<f64>>,
    /// `NaN` when no class could be evaluated.
    pub macro_avg: f64,
    /// Indices of classes left out of the mean.
    pub skipped: Vec<usize>,
}

impl MacroMetric {
    fn from_per_class(per_class: Vec<Option<f64>>) -> Self {
        let skipped: Vec<usize> = (0..per_class.len()).filter(|&c| per_class[c].is_none()).collect();
        let vals: Vec<f64> = per_class.iter().flatten().copied().collect();
        let macro_avg = if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        Self {
            per_class,
            macro_avg,
            skipped,
        }
    }
}

/// Per class: `(scores, labels)` over that class's evaluable samples.
pub fn macro_auc(classes: &[(Vec<f64>, Vec<bool>)]) -> MacroMetric {
    MacroMetric::from_per_class(classes.iter().map(|(s, l)| auc(s, l)).collect())
}

pub fn macro_f1(classes: &[(Vec<f64>, Vec<bool>)], threshold: f64) -> MacroMetric {
    MacroMetric::from_per_class(classes.iter().map(|(s, l)| f1(s, l, threshold)).collect())
}
