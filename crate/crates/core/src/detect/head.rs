use serde::{Deserialize, Serialize};

use crate::autodiff::kernels::sigmoid;
use crate::autodiff::nn::upsample2x;
use crate::autodiff::{Module, Parameter, Tensor};
use crate::backbone::{BlockState, HsvtBackbone, ModelConfig, TemporalModule};
use crate::error::{Error, Result};
use crate::layers::{Conv2d, ForwardCtx, Init};
use crate::profiler::OpCostRecord;

use super::boxes::{nms, BBox, Detection};

/// Strides of the maps handed to the neck.
pub const HEAD_STRIDES: [usize; 3] = [8, 16, 32];
/// Prediction channels before the class logits: dx, dy, log w, log h, obj.
pub const BOX_CHANNELS: usize = 5;
/// Initial objectness bias, `logit(0.01)`.
const OBJ_PRIOR: f64 = -4.59511985013459;
/// Upper clamp on log-size predictions.
pub const MAX_LOG_SIZE: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub max_detections: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            score_threshold: 0.05,
            nms_iou: 0.5,
            max_detections: 100,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("score_threshold", self.score_threshold), ("nms_iou", self.nms_iou)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid("head config", format!("{n} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Top-down feature pyramid (1×1 laterals, upsample and add) followed by a
/// shared 3×3 conv + GELU and a 1×1 prediction conv.
#[derive(Clone, Debug)]
pub struct DetectionHead {
    pub laterals: Vec<Conv2d>,
    pub stem: Conv2d,
    pub pred: Conv2d,
    pub num_classes: usize,
}

impl DetectionHead {
    pub fn new(init: &mut Init, in_channels: [usize; 3], width: usize, num_classes: usize) -> Result<Self> {
        let laterals = in_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| Conv2d::new(init, &format!("neck.lateral{}", i + 3), c, width, 1, 1, 0, true))
            .collect();
        let head = DetectionHead {
            laterals,
            stem: Conv2d::new(init, "head.stem", width, width, 3, 1, 1, true),
            pred: Conv2d::new(init, "head.pred", width, BOX_CHANNELS + num_classes, 1, 1, 0, true),
            num_classes,
        };
        let mut b = head.pred.b.as_ref().expect("pred bias").value().to_vec();
        b[4] = OBJ_PRIOR;
        head.pred.b.as_ref().expect("pred bias").set_data(b)?;
        Ok(head)
    }

    pub fn out_channels(&self) -> usize {
        BOX_CHANNELS + self.num_classes
    }

    /// Merged pyramid levels (strides 8, 16, 32), finest first.
    pub fn neck(&self, ctx: &ForwardCtx, feats: &[Tensor]) -> Result<Vec<Tensor>> {
        if feats.len() != 3 {
            return Err(Error::shape("neck", format!("expected 3 feature maps, got {}", feats.len())));
        }
        let mut merged: Vec<Tensor> = Vec::with_capacity(3);
        let mut above: Option<Tensor> = None;
        for i in (0..3).rev() {
            let lat = self.laterals[i].forward(ctx, &feats[i])?;
            let m = match above {
                Some(a) => lat.add(&upsample2x(&a)?)?,
                None => lat,
            };
            above = Some(m.clone());
            merged.push(m);
        }
        merged.reverse();
        Ok(merged)
    }

    /// Raw predictions `[N × (5 + K) × H_s × W_s]` per scale.
    pub fn forward(&self, ctx: &ForwardCtx, feats: &[Tensor]) -> Result<Vec<Tensor>> {
        self.neck(ctx, feats)?
            .iter()
            .map(|p| {
                let h = self.stem.forward(ctx, p)?.gelu()?;
                self.pred.forward(ctx, &h)
            })
            .collect()
    }

    /// `sizes` are the three input map extents; `spike_sources` names the
    /// spiking layer feeding each input, if any.
    pub fn costs(&self, n: usize, sizes: [(usize, usize); 3], spike_sources: [Option<String>; 3], out: &mut Vec<OpCostRecord>) {
        for (i, ((h, w), src)) in sizes.iter().zip(spike_sources).enumerate() {
            let macs = (n * h * w) as u64 * self.laterals[i].macs_per_position();
            let path = format!("neck.lateral{}", i + 3);
            out.push(match src {
                Some(s) => OpCostRecord::spiking(path, "conv1x1", macs, s, 1),
                None => OpCostRecord::ann(path, "conv1x1", macs),
            });
        }
        for (h, w) in sizes {
            let pos = (n * h * w) as u64;
            out.push(OpCostRecord::ann(format!("head.stem@{h}x{w}"), "conv", pos * self.stem.macs_per_position()));
            out.push(OpCostRecord::ann(format!("head.pred@{h}x{w}"), "conv1x1", pos * self.pred.macs_per_position()));
        }
    }
}

impl Module for DetectionHead {
    fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        for l in &self.laterals {
            l.parameters(out);
        }
        self.stem.parameters(out);
        self.pred.parameters(out);
    }
}

/// Backbone plus neck and head.
#[derive(Clone, Debug)]
pub struct Detector {
    pub backbone: HsvtBackbone,
    pub head: DetectionHead,
}

impl Detector {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        let backbone = HsvtBackbone::new(config, seed)?;
        let ch = config.channels();
        // separate stream so head init does not shift with backbone size
        let mut init = Init::new(seed ^ 0x9e37_79b9_7f4a_7c15);
        let head = DetectionHead::new(&mut init, [ch[1], ch[2], ch[3]], ch[1], config.num_classes)?;
        Ok(Detector { backbone, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.backbone.config
    }

    /// Predictions for one window; `state` carries the recurrence.
    pub fn forward(&self, ctx: &mut ForwardCtx, x: &Tensor, state: &mut BlockState) -> Result<Vec<Tensor>> {
        let out = self.backbone.forward(ctx, x, state)?;
        self.head.forward(ctx, out.neck_inputs())
    }

    pub fn costs(&self, n: usize, h: usize, w: usize) -> Vec<OpCostRecord> {
        let mut out = Vec::new();
        self.backbone.costs(n, h, w, &mut out);
        let ext = self.backbone.stage_extents(h, w);
        let sources: [Option<String>; 3] = std::array::from_fn(|i| {
            let stage = &self.backbone.stages[i + 1];
            match (&stage.temporal, stage.fusion) {
                (TemporalModule::Stfe(m), crate::backbone::Fusion::Replace) => Some(m.sn_h.name.clone()),
                (TemporalModule::Plain(m), crate::backbone::Fusion::Replace) => Some(m.sn.name.clone()),
                _ => None,
            }
        });
        self.head.costs(n, [ext[1], ext[2], ext[3]], sources, &mut out);
        out
    }
}

impl Module for Detector {
    fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.backbone.parameters(out);
        self.head.parameters(out);
    }
}

/// Boxes from raw predictions of one batch, per image, after thresholding
/// and class-wise NMS.
pub fn decode(preds: &[Tensor], num_classes: usize, cfg: &HeadConfig) -> Result<Vec<Vec<Detection>>> {
    let d = BOX_CHANNELS + num_classes;
    let n = preds.first().map_or(0, |p| p.shape()[0]);
    let mut out = vec![Vec::new(); n];
    for (p, &stride) in preds.iter().zip(HEAD_STRIDES.iter()) {
        let s = p.shape();
        if s.len() != 4 || s[1] != d || s[0] != n {
            return Err(Error::shape("decode", format!("prediction {s:?} with {num_classes} classes")));
        }
        let (h, w) = (s[2], s[3]);
        let plane = h * w;
        let data = p.data();
        let st = stride as f64;
        for (img, dets) in out.iter_mut().enumerate() {
            let base = img * d * plane;
            let at = |c: usize, cell: usize| data[base + c * plane + cell];
            for cell in 0..plane {
                let obj = sigmoid(at(4, cell));
                let (mut best_c, mut best) = (0, f64::NEG_INFINITY);
                for k in 0..num_classes {
                    let v = at(BOX_CHANNELS + k, cell);
                    if v > best {
                        (best_c, best) = (k, v);
                    }
                }
                let score = obj * sigmoid(best);
                if score < cfg.score_threshold {
                    continue;
                }
                let (cy, cx) = ((cell / w) as f64, (cell % w) as f64);
                let bw = at(2, cell).min(MAX_LOG_SIZE).exp() * st;
                let bh = at(3, cell).min(MAX_LOG_SIZE).exp() * st;
                let center = ((cx + 0.5 + at(0, cell)) * st, (cy + 0.5 + at(1, cell)) * st);
                dets.push(Detection {
                    bbox: BBox::from_center(center.0, center.1, bw, bh),
                    class_id: best_c,
                    score,
                });
            }
        }
    }
    Ok(out
        .into_iter()
        .map(|d| {
            let mut kept = nms(&d, cfg.nms_iou);
            kept.truncate(cfg.max_detections);
            kept
        })
        .collect())
}
