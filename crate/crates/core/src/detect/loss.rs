use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

use super::boxes::GroundTruth;
use super::head::{BOX_CHANNELS, HEAD_STRIDES, MAX_LOG_SIZE};

/// Where a ground truth is supervised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub scale: usize,
    pub image: usize,
    pub cell_x: usize,
    pub cell_y: usize,
    /// Row in the flattened `[Σ N·H_s·W_s × (5 + K)]` prediction matrix.
    pub row: usize,
}

/// Scale whose stride best matches the box size, `argmin |ln(√(wh) / s)|`;
/// ties go to the finer scale.
pub fn best_scale(w: f64, h: f64) -> usize {
    let size = (w * h).sqrt().max(1e-9);
    let mut best = (0, f64::INFINITY);
    for (i, &s) in HEAD_STRIDES.iter().enumerate() {
        let d = (size / s as f64).ln().abs();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Center-cell assignment. A cell already claimed by an earlier box is not
/// reassigned.
pub fn assign(extents: &[(usize, usize)], targets: &[Vec<GroundTruth>]) -> Vec<(Assignment, GroundTruth)> {
    let n = targets.len();
    let mut offsets = Vec::with_capacity(extents.len());
    let mut acc = 0;
    for &(h, w) in extents {
        offsets.push(acc);
        acc += n * h * w;
    }
    let mut out: Vec<(Assignment, GroundTruth)> = Vec::new();
    for (image, gts) in targets.iter().enumerate() {
        for g in gts {
            let scale = best_scale(g.bbox.w, g.bbox.h);
            let (h, w) = extents[scale];
            let stride = HEAD_STRIDES[scale] as f64;
            let (cx, cy) = g.bbox.center();
            let cell_x = ((cx / stride).floor().max(0.0) as usize).min(w - 1);
            let cell_y = ((cy / stride).floor().max(0.0) as usize).min(h - 1);
            let row = offsets[scale] + (image * h + cell_y) * w + cell_x;
            if out.iter().all(|(a, _)| a.row != row) {
                out.push((
                    Assignment {
                        scale,
                        image,
                        cell_x,
                        cell_y,
                        row,
                    },
                    *g,
                ));
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub obj: f64,
    pub cls: f64,
    pub iou: f64,
    pub positives: usize,
}

fn col(t: &Tensor, c: usize) -> Result<Tensor> {
    t.narrow(1, c, 1)
}

/// Objectness BCE over every cell, class BCE and `1 − IoU` over positive
/// cells, all divided by `max(1, #positives)`.
pub fn detection_loss(preds: &[Tensor], targets: &[Vec<GroundTruth>], num_classes: usize) -> Result<(Tensor, LossTerms)> {
    let d = BOX_CHANNELS + num_classes;
    if preds.len() != HEAD_STRIDES.len() {
        return Err(Error::shape("detection_loss", format!("{} scales", preds.len())));
    }
    let n = targets.len();
    let mut rows = Vec::with_capacity(preds.len());
    let mut extents = Vec::with_capacity(preds.len());
    for p in preds {
        let s = p.shape();
        if s.len() != 4 || s[0] != n || s[1] != d {
            return Err(Error::shape("detection_loss", format!("prediction {s:?} for {n} images, {d} channels")));
        }
        extents.push((s[2], s[3]));
        rows.push(p.permute(&[0, 2, 3, 1])?.reshape(&[n * s[2] * s[3], d])?);
    }
    let all = Tensor::concat(&rows.iter().collect::<Vec<_>>(), 0)?;
    let r = all.shape()[0];
    let assigned = assign(&extents, targets);
    for (_, g) in &assigned {
        if g.class_id >= num_classes {
            return Err(Error::invalid("target", format!("class {} with {num_classes} classes", g.class_id)));
        }
    }
    let positives = assigned.len();
    let norm = 1.0 / positives.max(1) as f64;

    let mut obj_t = vec![0.0; r];
    for (a, _) in &assigned {
        obj_t[a.row] = 1.0;
    }
    let obj = col(&all, 4)?.bce_with_logits(&Tensor::new(&[r, 1], obj_t)?)?.sum()?;
    let mut terms = LossTerms {
        obj: obj.item() * norm,
        positives,
        ..Default::default()
    };
    let mut total = obj;
    if positives > 0 {
        let idx: Vec<usize> = assigned.iter().map(|(a, _)| a.row).collect();
        let pos = all.gather_rows(&idx)?;
        let mut cls_t = vec![0.0; positives * num_classes];
        for (i, (_, g)) in assigned.iter().enumerate() {
            cls_t[i * num_classes + g.class_id] = 1.0;
        }
        let cls = pos
            .narrow(1, BOX_CHANNELS, num_classes)?
            .bce_with_logits(&Tensor::new(&[positives, num_classes], cls_t)?)?
            .sum()?;

        let k = |f: &dyn Fn(&Assignment, &GroundTruth) -> f64| {
            Tensor::new(&[positives, 1], assigned.iter().map(|(a, g)| f(a, g)).collect())
        };
        let stride = k(&|a, _| HEAD_STRIDES[a.scale] as f64)?;
        let base_x = k(&|a, _| (a.cell_x as f64 + 0.5) * HEAD_STRIDES[a.scale] as f64)?;
        let base_y = k(&|a, _| (a.cell_y as f64 + 0.5) * HEAD_STRIDES[a.scale] as f64)?;
        let gx1 = k(&|_, g| g.bbox.x)?;
        let gy1 = k(&|_, g| g.bbox.y)?;
        let gx2 = k(&|_, g| g.bbox.x + g.bbox.w)?;
        let gy2 = k(&|_, g| g.bbox.y + g.bbox.h)?;
        let g_area = k(&|_, g| g.bbox.area())?;
        let cap = Tensor::full(&[positives, 1], MAX_LOG_SIZE);

        let cx = col(&pos, 0)?.mul(&stride)?.add(&base_x)?;
        let cy = col(&pos, 1)?.mul(&stride)?.add(&base_y)?;
        let w = col(&pos, 2)?.minimum(&cap)?.exp()?.mul(&stride)?;
        let h = col(&pos, 3)?.minimum(&cap)?.exp()?.mul(&stride)?;
        let (hw, hh) = (w.mul_scalar(0.5)?, h.mul_scalar(0.5)?);
        let (px1, px2) = (cx.sub(&hw)?, cx.add(&hw)?);
        let (py1, py2) = (cy.sub(&hh)?, cy.add(&hh)?);
        let iw = px2.minimum(&gx2)?.sub(&px1.maximum(&gx1)?)?.clamp_min(0.0)?;
        let ih = py2.minimum(&gy2)?.sub(&py1.maximum(&gy1)?)?.clamp_min(0.0)?;
        let inter = iw.mul(&ih)?;
        let union = w.mul(&h)?.add(&g_area)?.sub(&inter)?;
        let iou_loss = inter.div(&union)?.neg()?.add_scalar(1.0)?.sum()?;

        terms.cls = cls.item() * norm;
        terms.iou = iou_loss.item() * norm;
        total = total.add(&cls)?.add(&iou_loss)?;
    }
    let total = total.mul_scalar(norm)?;
    terms.total = total.item();
    Ok((total, terms))
}

#[cfg(test)]
mod tests {
    use super::super::boxes::BBox;
    use super::*;

    fn gt(x: f64, y: f64, s: f64) -> GroundTruth {
        GroundTruth {
            bbox: BBox::new(x, y, s, s),
            class_id: 0,
        }
    }

    fn preds(n: usize, v: f64) -> Vec<Tensor> {
        [(8, 8), (4, 4), (2, 2)].iter().map(|&(h, w)| Tensor::full(&[n, 6, h, w], v)).collect()
    }

    #[test]
    fn scale_selection() {
        assert_eq!(best_scale(8.0, 8.0), 0);
        assert_eq!(best_scale(12.0, 12.0), 1);
        assert_eq!(best_scale(40.0, 40.0), 2);
    }

    #[test]
    fn assignment_rows() {
        let a = assign(&[(8, 8), (4, 4), (2, 2)], &[vec![], vec![gt(16.0, 20.0, 16.0)]]);
        assert_eq!(a.len(), 1);
        let (a, _) = a[0];
        // center (24, 28) at stride 16 -> cell (1, 1) of image 1
        assert_eq!((a.scale, a.cell_x, a.cell_y), (1, 1, 1));
        assert_eq!(a.row, 2 * 64 + 16 + 4 + 1);
    }

    #[test]
    fn no_labels_objectness_only() {
        let (l, t) = detection_loss(&preds(1, 0.3), &[vec![]], 1).unwrap();
        assert!(l.item() >= 0.0);
        assert_eq!((t.cls, t.iou, t.positives), (0.0, 0.0, 0));
    }

    #[test]
    fn perfect_box_has_zero_iou_term() {
        // 16x16 box centred in cell (1,1) at stride 16: dx = dy = 0, log w = 0
        let mut p = preds(1, 0.0);
        let target = vec![vec![gt(16.0, 16.0, 16.0)]];
        p[1] = Tensor::zeros(&[1, 6, 4, 4]);
        let (_, t) = detection_loss(&p, &target, 1).unwrap();
        assert_eq!(t.positives, 1);
        assert!(t.iou.abs() < 1e-12);
    }

    #[test]
    fn gradient_reaches_predictions() {
        let p: Vec<Tensor> = preds(1, 0.1).iter().map(|t| Tensor::leaf(t.shape(), t.to_vec()).unwrap()).collect();
        let (l, _) = detection_loss(&p, &[vec![gt(3.0, 5.0, 14.0)]], 1).unwrap();
        l.backward().unwrap();
        assert!(p.iter().all(|t| t.grad().iter().any(|g| *g != 0.0)));
    }
}
