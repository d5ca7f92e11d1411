//! Box overlap and mAP@[.5:.95] for single-object queries.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimator::LocationPrior;
use crate::geometry::SquareBox;

/// IoU thresholds 0.50, 0.55, …, 0.95.
pub const IOU_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

pub fn box_iou(a: &SquareBox, b: &SquareBox) -> f64 {
    a.iou(b)
}

/// One prediction against the single ground-truth object of its query.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalRecord {
    pub predicted: LocationPrior,
    pub truth: SquareBox,
    pub iou: f64,
}

impl EvalRecord {
    pub fn new(predicted: LocationPrior, truth: SquareBox) -> Self {
        let iou = box_iou(&SquareBox::new(predicted.center, predicted.size), &truth);
        Self { predicted, truth, iou }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MapReport {
    /// AP in percent at each of [`IOU_THRESHOLDS`].
    pub per_threshold_ap: Vec<f64>,
    /// Mean of `per_threshold_ap`, percent.
    pub map_50_95: f64,
}

/// Average precision (all-point interpolation) of confidence-ranked
/// predictions, one per query, each query holding exactly one object.
///
/// A prediction below `threshold` is a false positive and its object counts
/// as missed. Confidence ties keep input order.
pub fn average_precision(records: &[EvalRecord], threshold: f64) -> f64 {
    let n = records.len();
    if n == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| records[b].predicted.confidence.total_cmp(&records[a].predicted.confidence));

    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (rank, &i) in order.iter().enumerate() {
        if records[i].iou >= threshold {
            tp += 1;
        }
        precision.push(tp as f64 / (rank + 1) as f64);
        recall.push(tp as f64 / n as f64);
    }
    // precision envelope, right to left
    for i in (0..n.saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..n {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    ap
}

pub fn map_50_95(records: &[EvalRecord]) -> Result<MapReport> {
    if records.is_empty() {
        return Err(Error::param("cannot evaluate an empty record list"));
    }
    let per_threshold_ap: Vec<f64> = IOU_THRESHOLDS.iter().map(|&t| 100.0 * average_precision(records, t)).collect();
    let map = per_threshold_ap.iter().sum::<f64>() / per_threshold_ap.len() as f64;
    Ok(MapReport { per_threshold_ap, map_50_95: map })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(conf: f64, iou: f64) -> EvalRecord {
        EvalRecord {
            predicted: LocationPrior { center: [0.0, 0.0], size: 1.0, confidence: conf, best_reference: 0 },
            truth: SquareBox::new([0.0, 0.0], 1.0),
            iou,
        }
    }

    /// For every true positive, the best precision at that recall or beyond,
    /// times the recall step `1/n`.
    fn brute_force_ap(records: &[EvalRecord], t: f64) -> f64 {
        let n = records.len();
        let mut order: Vec<usize> = (0..n).collect();
        // stable insertion sort by descending confidence
        for i in 1..n {
            let mut j = i;
            while j > 0 && records[order[j - 1]].predicted.confidence < records[order[j]].predicted.confidence {
                order.swap(j - 1, j);
                j -= 1;
            }
        }
        let hits: Vec<bool> = order.iter().map(|&i| records[i].iou >= t).collect();
        let mut ap = 0.0;
        for r in 0..n {
            if !hits[r] {
                continue;
            }
            let mut best = 0.0f64;
            for r2 in r..n {
                let tp = hits[..=r2].iter().filter(|&&h| h).count();
                best = best.max(tp as f64 / (r2 + 1) as f64);
            }
            ap += best / n as f64;
        }
        ap
    }

    #[test]
    fn perfect_and_empty() {
        let exact: Vec<_> = (0..5).map(|i| rec(i as f64, 1.0)).collect();
        assert_eq!(map_50_95(&exact).unwrap().map_50_95, 100.0);
        let miss: Vec<_> = (0..5).map(|i| rec(i as f64, 0.0)).collect();
        assert_eq!(map_50_95(&miss).unwrap().map_50_95, 0.0);
        assert!(map_50_95(&[]).is_err());
    }

    #[test]
    fn hand_fixture_matches_brute_force() {
        let ious = [0.97, 0.52, 0.88, 0.1, 0.71, 0.66, 0.93, 0.0, 0.58, 0.81];
        let confs = [0.9, 0.8, 0.85, 0.95, 0.3, 0.5, 0.6, 0.2, 0.7, 0.4];
        let records: Vec<_> = ious.iter().zip(&confs).map(|(&i, &c)| rec(c, i)).collect();
        let report = map_50_95(&records).unwrap();
        let oracle: f64 =
            IOU_THRESHOLDS.iter().map(|&t| 100.0 * brute_force_ap(&records, t)).sum::<f64>() / 10.0;
        assert!((report.map_50_95 - oracle).abs() < 1e-9);
        // at 0.5 the only miss-ranked-first is the 0.95-confidence 0.1 IoU record
        assert!(report.per_threshold_ap[0] < 100.0 && report.per_threshold_ap[0] > 70.0);
    }

    #[test]
    fn ap_agrees_with_brute_force_on_pseudo_random_fixtures() {
        let mut state = 0x1234_5678u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let n = 1 + (next() * 30.0) as usize;
            let records: Vec<_> = (0..n).map(|_| rec((next() * 5.0).floor(), next())).collect();
            for &t in &IOU_THRESHOLDS {
                assert!((average_precision(&records, t) - brute_force_ap(&records, t)).abs() < 1e-9);
            }
        }
    }
}
