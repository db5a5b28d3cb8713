//! Multilabel F1 and ROC AUC, micro- and macro-averaged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Averaging {
    /// Pool every (example, label) cell.
    Micro,
    /// Compute per label, then average over labels.
    Macro,
}

/// Scores and binary truths for `N` examples and `C` labels.
#[derive(Clone, Debug)]
pub struct PredictionSet {
    scores: Vec<Vec<f64>>,
    truths: Vec<Vec<bool>>,
    num_labels: usize,
    pub threshold: f64,
}

impl PredictionSet {
    pub fn new(scores: Vec<Vec<f64>>, truths: Vec<Vec<bool>>, threshold: f64) -> Result<Self> {
        if scores.len() != truths.len() {
            return Err(Error::shape("predictions", &[scores.len()], &[truths.len()]));
        }
        let num_labels = truths.first().map_or(0, Vec::len);
        for (s, t) in scores.iter().zip(&truths) {
            if s.len() != num_labels || t.len() != num_labels {
                return Err(Error::shape("predictions", &[num_labels], &[s.len(), t.len()]));
            }
        }
        Ok(Self {
            scores,
            truths,
            num_labels,
            threshold,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty() || self.num_labels == 0
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Domain("empty prediction set".into()));
        }
        Ok(())
    }

    /// `(TP, FP, FN)` for one label.
    fn confusion(&self, c: usize) -> (usize, usize, usize) {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (s, t) in self.scores.iter().zip(&self.truths) {
            match (s[c] >= self.threshold, t[c]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        (tp, fp, fn_)
    }
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// `F1 = 2TP / (2TP + FP + FN)`, thresholding scores at `preds.threshold`
/// (score ≥ threshold is a positive prediction). A label with no positive
/// predictions and no positive truths has F1 = 0.
pub fn f1(preds: &PredictionSet, averaging: Averaging) -> Result<f64> {
    preds.check_nonempty()?;
    let counts: Vec<_> = (0..preds.num_labels).map(|c| preds.confusion(c)).collect();
    Ok(match averaging {
        Averaging::Micro => {
            let (tp, fp, fn_) = counts
                .iter()
                .fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
            f1_from_counts(tp, fp, fn_)
        }
        Averaging::Macro => {
            counts
                .iter()
                .map(|&(tp, fp, fn_)| f1_from_counts(tp, fp, fn_))
                .sum::<f64>()
                / counts.len() as f64
        }
    })
}

/// Normalized Mann–Whitney U: the fraction of (positive, negative) pairs
/// in which the positive scores higher, ties counting one half.
pub fn binary_auc(scores: &[f64], truths: &[bool]) -> Option<f64> {
    let positives = truths.iter().filter(|&&t| t).count();
    let negatives = truths.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives, using mid-ranks for ties; doubled so
    // every quantity is an integer.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share the mid-rank (i+1+j)/2.
        let tied_pos = order[i..j].iter().filter(|&&k| truths[k]).count() as u128;
        twice_rank_sum += tied_pos * (i + 1 + j) as u128;
        i = j;
    }
    let p = positives as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Some(twice_u as f64 / (2 * positives * negatives) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AucResult {
    pub value: f64,
    /// Labels left out of a macro average for lacking positives or negatives.
    pub skipped_labels: usize,
}

pub fn auc(preds: &PredictionSet, averaging: Averaging) -> Result<AucResult> {
    preds.check_nonempty()?;
    match averaging {
        Averaging::Micro => {
            let scores: Vec<f64> = preds.scores.iter().flatten().copied().collect();
            let truths: Vec<bool> = preds.truths.iter().flatten().copied().collect();
            let value = binary_auc(&scores, &truths).ok_or_else(|| {
                Error::UndefinedAuc("pooled truths contain only one class".into())
            })?;
            Ok(AucResult {
                value,
                skipped_labels: 0,
            })
        }
        Averaging::Macro => {
            let (mut total, mut used) = (0.0, 0);
            for c in 0..preds.num_labels {
                let s: Vec<f64> = preds.scores.iter().map(|r| r[c]).collect();
                let t: Vec<bool> = preds.truths.iter().map(|r| r[c]).collect();
                if let Some(a) = binary_auc(&s, &t) {
                    total += a;
                    used += 1;
                }
            }
            if used == 0 {
                return Err(Error::UndefinedAuc("no label has both classes".into()));
            }
            Ok(AucResult {
                value: total / used as f64,
                skipped_labels: preds.num_labels - used,
            })
        }
    }
}

/// The four summary metrics as written to metrics reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub m_f1: f64,
    #[serde(rename = "M_f1")]
    pub macro_f1: f64,
    /// `None` when undefined (single-class truths).
    pub m_auc: Option<f64>,
    #[serde(rename = "M_auc")]
    pub macro_auc: Option<f64>,
    pub threshold: f64,
    pub skipped_labels: usize,
}

pub fn evaluate(preds: &PredictionSet) -> Result<MetricsReport> {
    let macro_auc = auc(preds, Averaging::Macro).ok();
    Ok(MetricsReport {
        m_f1: f1(preds, Averaging::Micro)?,
        macro_f1: f1(preds, Averaging::Macro)?,
        m_auc: auc(preds, Averaging::Micro).ok().map(|a| a.value),
        macro_auc: macro_auc.map(|a| a.value),
        threshold: preds.threshold,
        skipped_labels: macro_auc.map_or(preds.num_labels, |a| a.skipped_labels),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: &[&[f64]], truths: &[&[u8]]) -> PredictionSet {
        PredictionSet::new(
            scores.iter().map(|r| r.to_vec()).collect(),
            truths.iter().map(|r| r.iter().map(|&v| v == 1).collect()).collect(),
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn micro_f1_worked_example() {
        let p = set(&[&[1.0, 0.0], &[1.0, 1.0]], &[&[1, 0], &[0, 1]]);
        assert_eq!(f1(&p, Averaging::Micro).unwrap(), 0.8);
    }

    #[test]
    fn perfect_and_all_negative() {
        let p = set(&[&[0.9, 0.1], &[0.2, 0.7]], &[&[1, 0], &[0, 1]]);
        assert_eq!(f1(&p, Averaging::Micro).unwrap(), 1.0);
        assert_eq!(f1(&p, Averaging::Macro).unwrap(), 1.0);
        let p = set(&[&[0.1, 0.1], &[0.2, 0.3]], &[&[1, 0], &[0, 1]]);
        assert_eq!(f1(&p, Averaging::Micro).unwrap(), 0.0);
    }

    #[test]
    fn empty_label_counts_zero_in_macro() {
        let p = set(&[&[0.9, 0.1], &[0.8, 0.2]], &[&[1, 0], &[1, 0]]);
        assert_eq!(f1(&p, Averaging::Macro).unwrap(), 0.5);
    }

    #[test]
    fn auc_worked_example_and_ties() {
        let p = set(&[&[0.1], &[0.4], &[0.35], &[0.8]], &[&[0], &[0], &[1], &[1]]);
        assert_eq!(auc(&p, Averaging::Micro).unwrap().value, 0.75);
        assert_eq!(binary_auc(&[0.3; 4], &[true, false, true, false]), Some(0.5));
        assert_eq!(binary_auc(&[0.9, 0.8, 0.1], &[true, true, false]), Some(1.0));
    }

    #[test]
    fn single_class_micro_auc_is_undefined() {
        let p = set(&[&[0.1], &[0.4]], &[&[1], &[1]]);
        assert!(matches!(auc(&p, Averaging::Micro), Err(Error::UndefinedAuc(_))));
    }

    #[test]
    fn macro_auc_skips_degenerate_labels() {
        let p = set(&[&[0.9, 0.2], &[0.1, 0.3]], &[&[1, 0], &[0, 0]]);
        let r = auc(&p, Averaging::Macro).unwrap();
        assert_eq!((r.value, r.skipped_labels), (1.0, 1));
    }

    #[test]
    fn empty_set_is_domain_error() {
        let p = PredictionSet::new(vec![], vec![], 0.5).unwrap();
        assert!(matches!(f1(&p, Averaging::Micro), Err(Error::Domain(_))));
    }

    #[test]
    fn report_json_keys() {
        let p = set(&[&[0.9, 0.1], &[0.2, 0.7]], &[&[1, 0], &[0, 1]]);
        let json = serde_json::to_value(evaluate(&p).unwrap()).unwrap();
        for key in ["m_f1", "M_f1", "m_auc", "M_auc", "threshold", "skipped_labels"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
