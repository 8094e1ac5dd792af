use serde::{Deserialize, Serialize};

use crate::events::BoxRecord;

/// Axis-aligned box, top-left corner plus extent, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }
}

impl From<&BoxRecord> for BBox {
    fn from(r: &BoxRecord) -> Self {
        BBox::new(r.x as f64, r.y as f64, r.w as f64, r.h as f64)
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: usize,
    pub score: f64,
}

/// Ground-truth box with its class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub class_id: usize,
}

impl From<&BoxRecord> for GroundTruth {
    fn from(r: &BoxRecord) -> Self {
        GroundTruth {
            bbox: r.into(),
            class_id: r.class_id as usize,
        }
    }
}

/// Indices of `dets` sorted by descending score; ties keep input order.
pub fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// Class-wise greedy suppression: a box is dropped when it overlaps an
/// already kept box of its class by more than `iou_threshold`.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in score_order(dets) {
        let d = dets[i];
        if kept
            .iter()
            .all(|k| k.class_id != d.class_id || iou(&k.bbox, &d.bbox) <= iou_threshold)
        {
            kept.push(d);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_unit_cases() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(5.0, 5.0, 1.0, 1.0)), 0.0);
        assert!((iou(&a, &BBox::new(1.0, 1.0, 2.0, 2.0)) - 1.0 / 7.0).abs() < 1e-12);
        // touching edges do not overlap
        assert_eq!(iou(&a, &BBox::new(2.0, 0.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn nms_keeps_best_of_duplicates() {
        let b = BBox::new(1.0, 1.0, 4.0, 4.0);
        let dets = [
            Detection { bbox: b, class_id: 0, score: 0.4 },
            Detection { bbox: b, class_id: 0, score: 0.9 },
            Detection { bbox: b, class_id: 1, score: 0.3 },
        ];
        let kept = nms(&dets, 0.5);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].score, 0.9);
        assert_eq!(kept[1].class_id, 1);
    }
}
