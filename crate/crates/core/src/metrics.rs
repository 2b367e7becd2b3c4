//! Ranking and thresholded metrics for binary edge classification.
//!
//! All counts are accumulated as integers, so every metric is an exact
//! ratio of integers rounded once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub ks: f64,
    pub f1_at_half: f64,
    pub f1_best: f64,
    pub best_threshold: f64,
    pub pr_curve: Vec<PrPoint>,
}

/// Precision levels 0.975, 0.95, ..., 0.7.
pub fn default_precision_grid() -> Vec<f64> {
    (0..12).rev().map(|k| (700 + 25 * k) as f64 / 1000.0).collect()
}

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let p = labels.iter().filter(|&&y| y).count() as u64;
    let n = labels.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::DegenerateLabels {
            positives: p as usize,
            negatives: n as usize,
        });
    }
    Ok((p, n))
}

/// Groups of tied scores in descending score order, as
/// `(score, positives, negatives)`.
fn tie_groups(scores: &[f64], labels: &[bool]) -> Vec<(f64, u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for i in order {
        let (s, y) = (scores[i], labels[i]);
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                if y {
                    g.1 += 1;
                } else {
                    g.2 += 1;
                }
            }
            _ => groups.push((s, u64::from(y), u64::from(!y))),
        }
    }
    groups
}

/// Confusion counts `(tp, fp)` when predicting positive for scores at or
/// above each distinct score, descending.
fn sweep(scores: &[f64], labels: &[bool]) -> Vec<(f64, u64, u64)> {
    let mut tp = 0;
    let mut fp = 0;
    tie_groups(scores, labels)
        .into_iter()
        .map(|(s, p, n)| {
            tp += p;
            fp += n;
            (s, tp, fp)
        })
        .collect()
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (p, n) = class_counts(scores, labels)?;
    // Twice the Mann-Whitney count, walking from the lowest score up.
    let mut twice: u128 = 0;
    let mut negatives_below: u128 = 0;
    for (_, gp, gn) in tie_groups(scores, labels).into_iter().rev() {
        twice += 2 * negatives_below * gp as u128 + gp as u128 * gn as u128;
        negatives_below += gn as u128;
    }
    Ok(twice as f64 / (2 * p as u128 * n as u128) as f64)
}

/// Maximum over thresholds of `|TPR - FPR|`.
pub fn ks(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (p, n) = class_counts(scores, labels)?;
    let best = sweep(scores, labels)
        .into_iter()
        .map(|(_, tp, fp)| (tp as i128 * n as i128 - fp as i128 * p as i128).unsigned_abs())
        .max()
        .unwrap_or(0);
    Ok(best as f64 / (p as u128 * n as u128) as f64)
}

fn f1_from_counts(tp: u64, fp: u64, positives: u64) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let fn_ = positives - tp;
    (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
}

/// F1 when predicting positive for `score >= threshold`; 0 when nothing is
/// predicted positive.
pub fn f1(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    let (p, _) = class_counts(scores, labels)?;
    let mut tp = 0;
    let mut fp = 0;
    for (&s, &y) in scores.iter().zip(labels) {
        if s >= threshold {
            if y {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    Ok(f1_from_counts(tp, fp, p))
}

/// Best F1 over thresholds drawn from the score values, with the threshold
/// that attains it (the highest such threshold on ties).
pub fn f1_best(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    let (p, _) = class_counts(scores, labels)?;
    let mut best = (0.0, f64::INFINITY);
    for (s, tp, fp) in sweep(scores, labels) {
        let f = f1_from_counts(tp, fp, p);
        if f > best.0 {
            best = (f, s);
        }
    }
    Ok(best)
}

/// For each precision level, the largest recall reachable by a threshold
/// whose precision is at least that level (0 if none).
pub fn pr_curve(scores: &[f64], labels: &[bool], grid: &[f64]) -> Result<Vec<PrPoint>> {
    let (p, _) = class_counts(scores, labels)?;
    let points = sweep(scores, labels);
    Ok(grid
        .iter()
        .map(|&level| {
            let recall = points
                .iter()
                .filter(|(_, tp, fp)| *tp as f64 / (tp + fp) as f64 >= level)
                .map(|(_, tp, _)| *tp as f64 / p as f64)
                .fold(0.0, f64::max);
            PrPoint {
                precision: level,
                recall,
            }
        })
        .collect())
}

/// Every metric at once, with F1 at threshold one half.
pub fn evaluate(scores: &[f64], labels: &[bool]) -> Result<MetricsReport> {
    let (f1_best, best_threshold) = f1_best(scores, labels)?;
    Ok(MetricsReport {
        auc: auc(scores, labels)?,
        ks: ks(scores, labels)?,
        f1_at_half: f1(scores, labels, 0.5)?,
        f1_best,
        best_threshold,
        pr_curve: pr_curve(scores, labels, &default_precision_grid())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: [f64; 4] = [0.1, 0.4, 0.35, 0.8];
    const Y: [bool; 4] = [false, false, true, true];

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&S, &Y).unwrap(), 0.75);
        assert_eq!(auc(&[0.2, 0.9], &[false, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &Y).unwrap(), 0.5);
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks(&S, &Y).unwrap(), 0.5);
        assert_eq!(ks(&[0.2, 0.9], &[false, true]).unwrap(), 1.0);
        assert_eq!(ks(&[0.5; 4], &Y).unwrap(), 0.0);
    }

    #[test]
    fn f1_examples() {
        let s = [0.9, 0.6, 0.2];
        let y = [true, false, true];
        assert_eq!(f1(&s, &y, 0.5).unwrap(), 0.5);
        assert_eq!(f1(&[0.9, 0.1], &[true, false], 0.5).unwrap(), 1.0);
        assert_eq!(f1(&[0.3, 0.1], &[true, false], 0.5).unwrap(), 0.0);
        let (best, thr) = f1_best(&s, &y).unwrap();
        assert_eq!(best, 0.8);
        assert_eq!(thr, 0.2);
    }

    #[test]
    fn degenerate_labels_rejected() {
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(Error::DegenerateLabels { .. })));
        assert!(ks(&[], &[]).is_err());
        assert!(auc(&[f64::NAN, 0.1], &[true, false]).is_err());
    }

    #[test]
    fn grid_has_twelve_descending_levels() {
        let g = default_precision_grid();
        assert_eq!(g.len(), 12);
        assert_eq!(g[0], 0.975);
        assert_eq!(g[11], 0.7);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn perfect_scores_reach_full_recall_everywhere() {
        let pr = pr_curve(&[0.1, 0.2, 0.8, 0.9], &Y, &default_precision_grid()).unwrap();
        assert!(pr.iter().all(|p| p.recall == 1.0));
    }
}
