//! COCO-style average precision with 101-point interpolation.

use serde::{Deserialize, Serialize};

use super::boxes::{iou, Detection, GroundTruth};

pub const RECALL_POINTS: usize = 101;

/// IoU thresholds 0.50, 0.55, …, 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map_50_95: f64,
    pub map_50: f64,
    pub map_75: f64,
    /// mAP at each threshold of [`iou_thresholds`].
    pub per_threshold: Vec<f64>,
    /// Classes that have ground truth, in increasing order.
    pub classes: Vec<usize>,
}

/// Greedy matching of one image's detections of one class in descending
/// score order; each ground truth absorbs at most one detection. Returns a
/// true-positive flag per detection.
fn match_image(dets: &[(f64, usize)], all: &[Detection], gts: &[&GroundTruth], threshold: f64) -> Vec<bool> {
    let mut taken = vec![false; gts.len()];
    dets.iter()
        .map(|&(_, di)| {
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gts.iter().enumerate() {
                if taken[gi] {
                    continue;
                }
                let v = iou(&all[di].bbox, &g.bbox);
                if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((gi, v));
                }
            }
            match best {
                Some((gi, _)) => {
                    taken[gi] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Average precision of one class at one IoU threshold.
pub fn average_precision(dets: &[Vec<Detection>], gts: &[Vec<GroundTruth>], class_id: usize, threshold: f64) -> f64 {
    let n_gt: usize = gts.iter().map(|g| g.iter().filter(|b| b.class_id == class_id).count()).sum();
    if n_gt == 0 {
        return 0.0;
    }
    // (score, image, tp)
    let mut scored: Vec<(f64, usize, bool)> = Vec::new();
    for (img, (d, g)) in dets.iter().zip(gts).enumerate() {
        let mut mine: Vec<(f64, usize)> = d
            .iter()
            .enumerate()
            .filter(|(_, x)| x.class_id == class_id)
            .map(|(i, x)| (x.score, i))
            .collect();
        mine.sort_by(|a, b| b.0.total_cmp(&a.0));
        let g: Vec<&GroundTruth> = g.iter().filter(|b| b.class_id == class_id).collect();
        let tp = match_image(&mine, d, &g, threshold);
        scored.extend(mine.iter().zip(tp).map(|(&(s, _), t)| (s, img, t)));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = Vec::with_capacity(scored.len());
    let mut precision = Vec::with_capacity(scored.len());
    for &(_, _, is_tp) in &scored {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        let i = recall.partition_point(|&v| v < r);
        if i < precision.len() {
            sum += precision[i];
        }
    }
    sum / RECALL_POINTS as f64
}

/// mAP over the classes present in the ground truth; 0 when there is none.
pub fn evaluate(dets: &[Vec<Detection>], gts: &[Vec<GroundTruth>]) -> MapReport {
    let mut classes: Vec<usize> = gts.iter().flatten().map(|g| g.class_id).collect();
    classes.sort_unstable();
    classes.dedup();
    let per_threshold: Vec<f64> = iou_thresholds()
        .iter()
        .map(|&t| {
            if classes.is_empty() {
                0.0
            } else {
                classes.iter().map(|&c| average_precision(dets, gts, c, t)).sum::<f64>() / classes.len() as f64
            }
        })
        .collect();
    MapReport {
        map_50_95: per_threshold.iter().sum::<f64>() / per_threshold.len() as f64,
        map_50: per_threshold[0],
        map_75: per_threshold[5],
        per_threshold,
        classes,
    }
}

pub fn map_50_95(dets: &[Vec<Detection>], gts: &[Vec<GroundTruth>]) -> f64 {
    evaluate(dets, gts).map_50_95
}

#[cfg(test)]
mod tests {
    use super::super::boxes::BBox;
    use super::*;

    fn gt(x: f64, c: usize) -> GroundTruth {
        GroundTruth {
            bbox: BBox::new(x, x, 10.0, 10.0),
            class_id: c,
        }
    }

    #[test]
    fn perfect_predictions() {
        let gts = vec![vec![gt(0.0, 0), gt(20.0, 1)], vec![gt(5.0, 0)]];
        let dets: Vec<Vec<Detection>> = gts
            .iter()
            .map(|g| g.iter().map(|b| Detection { bbox: b.bbox, class_id: b.class_id, score: 1.0 }).collect())
            .collect();
        let r = evaluate(&dets, &gts);
        assert_eq!(r.map_50_95, 1.0);
        assert_eq!(r.classes, vec![0, 1]);
    }

    #[test]
    fn no_predictions_or_no_truth() {
        let gts = vec![vec![gt(0.0, 0)]];
        assert_eq!(map_50_95(&[vec![]], &gts), 0.0);
        assert_eq!(map_50_95(&[vec![]], &[vec![]]), 0.0);
    }

    #[test]
    fn half_recall() {
        let gts = vec![vec![gt(0.0, 0), gt(50.0, 0)]];
        let dets = vec![vec![Detection { bbox: gt(0.0, 0).bbox, class_id: 0, score: 0.9 }]];
        // recall reaches 0.5 at precision 1: points 0.00..0.50 → 51 of 101
        assert!((evaluate(&dets, &gts).map_50 - 51.0 / 101.0).abs() < 1e-15);
    }
}
