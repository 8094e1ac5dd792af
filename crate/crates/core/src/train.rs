//! Truncated-BPTT training and sequence evaluation.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{checkpoint, Module, Tensor};
use crate::backbone::{BlockState, ModelConfig};
use crate::data::{generate, Sample, SyntheticConfig};
use crate::detect::{
    clip_grad_norm, decode, detection_loss, evaluate, lr_at, Adam, Detection, Detector, GroundTruth, HeadConfig, LossTerms,
    MapReport, ScheduleConfig,
};
use crate::error::{Error, Result};
use crate::layers::ForwardCtx;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub train_sequences: usize,
    pub val_sequences: usize,
    pub batch_size: usize,
    /// Windows per truncated-BPTT sequence.
    pub seq_len: usize,
    pub lr_max: f64,
    pub clip_norm: f64,
    /// Write a step record every this many steps (0: only epoch records).
    pub log_every: usize,
    /// Start every window from rest (disables recurrence).
    pub reset_every_window: bool,
    /// Draw a new training set every epoch instead of reusing one.
    pub fresh_data: bool,
    pub model: ModelConfig,
    pub data: SyntheticConfig,
    pub head: HeadConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 30,
            train_sequences: 192,
            val_sequences: 32,
            batch_size: 4,
            seq_len: 5,
            lr_max: 3e-3,
            clip_norm: 10.0,
            log_every: 10,
            reset_every_window: false,
            fresh_data: true,
            model: ModelConfig::desk_scale(),
            data: SyntheticConfig::default(),
            head: HeadConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.data.validate()?;
        self.head.validate()?;
        let bad = |m: String| Err(Error::invalid("train config", m));
        if self.epochs == 0 || self.train_sequences == 0 || self.batch_size == 0 || self.seq_len == 0 {
            return bad("epochs, train_sequences, batch_size and seq_len must be positive".into());
        }
        if self.seq_len > self.data.windows_per_sequence {
            return bad(format!(
                "seq_len {} exceeds {} windows per sequence",
                self.seq_len, self.data.windows_per_sequence
            ));
        }
        if self.model.t_bins != self.data.t_bins {
            return bad(format!("model t_bins {} != data t_bins {}", self.model.t_bins, self.data.t_bins));
        }
        if !(self.lr_max > 0.0) || !(self.clip_norm > 0.0) {
            return bad("lr_max and clip_norm must be positive".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::parse("train config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    fn chunks_per_sequence(&self) -> usize {
        self.data.windows_per_sequence / self.seq_len
    }

    pub fn steps_per_epoch(&self) -> usize {
        (self.train_sequences * self.chunks_per_sequence()).div_ceil(self.batch_size)
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricRecord {
    Step {
        epoch: usize,
        step: usize,
        lr: f64,
        loss: f64,
        obj: f64,
        cls: f64,
        iou: f64,
        grad_norm: f64,
    },
    Eval {
        epoch: usize,
        step: usize,
        map_50: f64,
        map_50_95: f64,
    },
    Diverged {
        step: usize,
        loss: f64,
    },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub detector: Detector,
    pub final_eval: MapReport,
    pub records: Vec<MetricRecord>,
    pub steps: usize,
    pub seconds: f64,
}

struct Log {
    file: Option<std::fs::File>,
    path: PathBuf,
    records: Vec<MetricRecord>,
}

impl Log {
    fn push(&mut self, r: MetricRecord) -> Result<()> {
        if let Some(f) = self.file.as_mut() {
            let line = serde_json::to_string(&r).expect("record serialises");
            writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))?;
        }
        self.records.push(r);
        Ok(())
    }
}

/// Stack window `k` of several samples into `[N × C × H × W]`.
pub fn stack_windows(items: &[(&Sample, usize)]) -> Result<Tensor> {
    let [c, h, w] = items[0].0.frames.frame_shape();
    let mut data = Vec::with_capacity(items.len() * c * h * w);
    for (s, k) in items {
        data.extend_from_slice(&s.frames.frames[*k]);
    }
    Tensor::new(&[items.len(), c, h, w], data)
}

fn diverged(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { .. } => Error::Diverged { step, loss: f64::NAN },
        other => other,
    }
}

/// Run every window of each sample in order from rest; returns detections
/// and targets per (sample, window).
pub fn predict_sequences(
    det: &Detector,
    samples: &[Sample],
    head: &HeadConfig,
    reset_every_window: bool,
) -> Result<(Vec<Vec<Detection>>, Vec<Vec<GroundTruth>>)> {
    let mut all_dets = Vec::new();
    let mut all_gts = Vec::new();
    if samples.is_empty() {
        return Ok((all_dets, all_gts));
    }
    let windows = samples.iter().map(|s| s.frames.len()).min().unwrap_or(0);
    let mut per_sample: Vec<Vec<(Vec<Detection>, Vec<GroundTruth>)>> = vec![Vec::new(); samples.len()];
    let mut state = BlockState::new();
    for k in 0..windows {
        if reset_every_window {
            state = BlockState::new();
        }
        let items: Vec<(&Sample, usize)> = samples.iter().map(|s| (s, k)).collect();
        let x = stack_windows(&items)?;
        let preds = det.forward(&mut ForwardCtx::inference(), &x, &mut state)?;
        let dets = decode(&preds, det.config().num_classes, head)?;
        for (i, d) in dets.into_iter().enumerate() {
            per_sample[i].push((d, samples[i].targets[k].clone()));
        }
    }
    for s in per_sample {
        for (d, g) in s {
            all_dets.push(d);
            all_gts.push(g);
        }
    }
    Ok((all_dets, all_gts))
}

pub fn evaluate_samples(det: &Detector, samples: &[Sample], head: &HeadConfig, reset_every_window: bool) -> Result<MapReport> {
    let (d, g) = predict_sequences(det, samples, head, reset_every_window)?;
    Ok(evaluate(&d, &g))
}

/// Forward and loss over one batch of `(sample, first window)` chunks.
pub fn batch_loss(
    det: &Detector,
    chunks: &[(&Sample, usize)],
    seq_len: usize,
    reset_every_window: bool,
) -> Result<(Tensor, LossTerms)> {
    let mut ctx = ForwardCtx::training();
    let mut state = BlockState::new();
    let mut total: Option<Tensor> = None;
    let mut terms = LossTerms::default();
    for k in 0..seq_len {
        if reset_every_window {
            state = BlockState::new();
        }
        let items: Vec<(&Sample, usize)> = chunks.iter().map(|(s, w)| (*s, w + k)).collect();
        let x = stack_windows(&items)?;
        let targets: Vec<Vec<GroundTruth>> = items.iter().map(|(s, w)| s.targets[*w].clone()).collect();
        let preds = det.forward(&mut ctx, &x, &mut state)?;
        let (l, t) = detection_loss(&preds, &targets, det.config().num_classes)?;
        terms.obj += t.obj / seq_len as f64;
        terms.cls += t.cls / seq_len as f64;
        terms.iou += t.iou / seq_len as f64;
        terms.positives += t.positives;
        total = Some(match total {
            None => l,
            Some(acc) => acc.add(&l)?,
        });
    }
    let total = total.expect("seq_len >= 1").mul_scalar(1.0 / seq_len as f64)?;
    terms.total = total.item();
    Ok((total, terms))
}

/// Train on freshly generated synthetic data. When `out_dir` is given the
/// metrics log, configs and final checkpoint are written there.
pub fn train(cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let train_seed = |epoch: usize| {
        let base = cfg.seed.wrapping_mul(2).wrapping_add(1);
        if cfg.fresh_data {
            base ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        } else {
            base
        }
    };
    let mut train_set = generate(&cfg.data, cfg.train_sequences, train_seed(1))?;
    let val_set = generate(&cfg.data, cfg.val_sequences, cfg.seed.wrapping_mul(2).wrapping_add(2))?;
    let det = Detector::new(&cfg.model, cfg.seed)?;
    let params = det.param_list();
    let mut opt = Adam::new(&params);
    let total_steps = cfg.epochs * cfg.steps_per_epoch();
    let sched = ScheduleConfig::new(cfg.lr_max, total_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);

    let metrics_path = out_dir.map_or_else(PathBuf::new, |d| d.join("metrics.jsonl"));
    let mut log = Log {
        file: None,
        path: metrics_path.clone(),
        records: Vec::new(),
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg_path = dir.join("train.toml");
        std::fs::write(&cfg_path, cfg.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
        let model_path = dir.join("model.toml");
        std::fs::write(&model_path, cfg.model.to_toml()).map_err(|e| Error::io(&model_path, e))?;
        log.file = Some(std::fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?);
    }

    let mut chunks: Vec<(usize, usize)> = (0..train_set.len())
        .flat_map(|s| (0..cfg.chunks_per_sequence()).map(move |c| (s, c * cfg.seq_len)))
        .collect();
    let mut step = 0;
    let mut final_eval = None;
    for epoch in 1..=cfg.epochs {
        if cfg.fresh_data && epoch > 1 {
            train_set = generate(&cfg.data, cfg.train_sequences, train_seed(epoch))?;
        }
        chunks.shuffle(&mut rng);
        for batch in chunks.chunks(cfg.batch_size) {
            let items: Vec<(&Sample, usize)> = batch.iter().map(|&(s, w)| (&train_set[s], w)).collect();
            let (loss, terms) = batch_loss(&det, &items, cfg.seq_len, cfg.reset_every_window).map_err(|e| diverged(step, e))?;
            if !terms.total.is_finite() {
                log.push(MetricRecord::Diverged { step, loss: terms.total })?;
                return Err(Error::Diverged { step, loss: terms.total });
            }
            det.zero_grad();
            loss.backward().map_err(|e| diverged(step, e))?;
            let mut grads: Vec<Vec<f64>> = params.iter().map(|p| p.grad()).collect();
            let grad_norm = clip_grad_norm(&mut grads, cfg.clip_norm);
            if !grad_norm.is_finite() {
                log.push(MetricRecord::Diverged { step, loss: terms.total })?;
                return Err(Error::Diverged { step, loss: terms.total });
            }
            let lr = lr_at(&sched, step);
            opt.step_with(&params, &grads, lr)?;
            step += 1;
            if cfg.log_every > 0 && (step % cfg.log_every == 0 || step == 1) {
                log.push(MetricRecord::Step {
                    epoch,
                    step,
                    lr,
                    loss: terms.total,
                    obj: terms.obj,
                    cls: terms.cls,
                    iou: terms.iou,
                    grad_norm,
                })?;
                log::info!(
                    "epoch {epoch} step {step}/{total_steps} loss {:.4} ({:.1}s)",
                    terms.total,
                    started.elapsed().as_secs_f64()
                );
            }
        }
        let report = evaluate_samples(&det, &val_set, &cfg.head, cfg.reset_every_window)?;
        log::info!("epoch {epoch}: mAP@0.5 {:.3}, mAP@50:95 {:.3}", report.map_50, report.map_50_95);
        log.push(MetricRecord::Eval {
            epoch,
            step,
            map_50: report.map_50,
            map_50_95: report.map_50_95,
        })?;
        final_eval = Some(report);
    }
    if let Some(dir) = out_dir {
        checkpoint::save(&det, &dir.join("model.ckpt"))?;
    }
    Ok(TrainOutcome {
        detector: det,
        final_eval: final_eval.expect("at least one epoch"),
        records: log.records,
        steps: step,
        seconds: started.elapsed().as_secs_f64(),
    })
}
