//! Command-line front end of the `hsvt` binary.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 I/O failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::autodiff::{checkpoint, Tensor};
use crate::backbone::{parse_placement, BlockState, ModelConfig, Variant};
use crate::data::{generate, SyntheticConfig};
use crate::detect::{decode, evaluate, BBox, Detection, Detector, GroundTruth, HeadConfig, MapReport};
use crate::error::{Error, Result};
use crate::esim::{frames_to_events, load_frames, ConverterConfig};
use crate::events::io::LABEL_MAGIC;
use crate::events::{
    accumulate, align_labels, read_events, read_labels, write_events, write_labels, BoxRecord, CornerBox, DatasetPreset,
    EventFormat, FrameTensorSequence, WindowRange, WindowSpec,
};
use crate::layers::ForwardCtx;
use crate::profiler::{audit_row, component_report, profile_detector, reference_energy, BACKBONE_ENERGY_ROWS};
use crate::train::{train, TrainConfig};
use crate::viz;

pub const DATA_ROOT_ENV: &str = "HSVT_DATA_ROOT";

#[derive(Debug, Parser)]
#[command(name = "hsvt", version, about = "Event-camera detection with a hybrid spiking vision transformer")]
pub struct Cli {
    /// Base directory for relative input paths.
    #[arg(long, global = true, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert event files between CSV and binary.
    ConvertEvents(ConvertEventsArgs),
    /// Convert corner-format text labels to binary records, or back.
    ConvertLabels(ConvertLabelsArgs),
    /// Turn an intensity video into events.
    SimulateEvents(SimulateArgs),
    /// Train a detector on synthetic moving squares.
    Train(TrainArgs),
    /// Report mAP of a checkpoint or of a prediction file.
    Eval(EvalArgs),
    /// FLOPs, firing rates and theoretical energy.
    Profile(ProfileArgs),
    /// Write Block-SA and Grid-SA attention maps of one window.
    DumpAttention(DumpAttentionArgs),
}

#[derive(Debug, Args)]
pub struct ConvertEventsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Input format (csv|bin); guessed from the extension when absent.
    #[arg(long)]
    pub from: Option<String>,
    /// Output format (csv|bin); guessed from the extension when absent.
    #[arg(long)]
    pub to: Option<String>,
    /// Sensor size WIDTHxHEIGHT for CSV input.
    #[arg(long)]
    pub sensor: Option<String>,
}

#[derive(Debug, Args)]
pub struct ConvertLabelsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Video frame rate joining frame indices to timestamps.
    #[arg(long)]
    pub fps: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory of PGM frames or a raw video file.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Frame rate of a PGM directory (raw files carry their own).
    #[arg(long, default_value_t = 1000.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 0.2)]
    pub c_pos: f64,
    #[arg(long, default_value_t = 0.2)]
    pub c_neg: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub log_eps: f64,
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML training config; defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Receives model.ckpt, model.toml, train.toml and metrics.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Temporal modules per stage, e.g. `lstm,lstm,lstm,stfe`.
    #[arg(long)]
    pub placement: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Model config (TOML); the desk-scale model when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Preset variant used instead of a config file.
    #[arg(long, conflicts_with = "model")]
    pub variant: Option<String>,
    #[arg(long)]
    pub placement: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// gen1|fall|air|synthetic, selects the window length.
    #[arg(long, default_value = "synthetic")]
    pub preset: String,
    #[arg(long)]
    pub delta_t_ms: Option<f64>,
    /// Synthetic sequences to generate when no event file is given.
    #[arg(long, default_value_t = 16)]
    pub synthetic: usize,
    #[arg(long, default_value_t = 1)]
    pub data_seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Detections as a label file (confidence = score); evaluated against
    /// `--labels` without running a model.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// Synthetic calibration windows for firing rates.
    #[arg(long, default_value_t = 4)]
    pub calibration_windows: usize,
    /// Recompute a published backbone row (tiny|small|base) instead of a model.
    #[arg(long)]
    pub published: Option<String>,
    /// Also write line-delimited JSON records here.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpAttentionArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Window to visualise; earlier windows only advance the recurrence.
    #[arg(long, default_value_t = 0)]
    pub window: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => 2,
        _ => 1,
    }
}

struct Paths {
    root: Option<PathBuf>,
}

impl Paths {
    fn input(&self, p: &Path) -> PathBuf {
        match &self.root {
            Some(r) if p.is_relative() => r.join(p),
            _ => p.to_path_buf(),
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let paths = Paths { root: cli.data_root };
    match cli.command {
        Command::ConvertEvents(a) => convert_events(&paths, a),
        Command::ConvertLabels(a) => convert_labels(&paths, a),
        Command::SimulateEvents(a) => simulate_events(&paths, a),
        Command::Train(a) => train_cmd(&paths, a),
        Command::Eval(a) => eval_cmd(&paths, a),
        Command::Profile(a) => profile_cmd(&paths, a),
        Command::DumpAttention(a) => dump_attention(&paths, a),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_sensor(s: &str) -> Result<(u16, u16)> {
    let bad = || Error::invalid("sensor", format!("expected WIDTHxHEIGHT, got {s:?}"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?))
}

fn format_or_guess(f: &Option<String>, path: &Path) -> Result<EventFormat> {
    f.as_deref().map_or(Ok(EventFormat::from_path(path)), EventFormat::parse)
}

fn convert_events(paths: &Paths, a: ConvertEventsArgs) -> Result<()> {
    let input = paths.input(&a.input);
    let sensor = a.sensor.as_deref().map(parse_sensor).transpose()?;
    let (stream, report) = read_events(&input, format_or_guess(&a.from, &input)?, sensor)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    write_events(&a.output, &stream, format_or_guess(&a.to, &a.output)?)?;
    eprintln!("{} events, sensor {}x{}", stream.len(), stream.width(), stream.height());
    Ok(())
}

/// Timestamp of frame `frame` at `fps`, in microseconds.
pub fn frame_time_us(frame: u64, fps: f64) -> u64 {
    (frame as f64 * 1e6 / fps).round() as u64
}

/// Parse corner-format labels: `frame,class_id,x1,y1,x2,y2[,track_id[,confidence]]`.
/// Blank lines, `#` comments and a header starting with `frame` are skipped.
pub fn parse_corner_labels(text: &str, fps: f64, name: &str) -> Result<Vec<BoxRecord>> {
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(Error::invalid("fps", format!("{fps}")));
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("frame")) {
            continue;
        }
        let at = |m: String| Error::parse(format!("{name}:{}", i + 1), m);
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(6..=8).contains(&f.len()) {
            return Err(at(format!("expected 6 to 8 fields, got {}", f.len())));
        }
        let int = |k: usize| f[k].parse::<i64>().map_err(|_| at(format!("field {} is not an integer: {:?}", k + 1, f[k])));
        let frame = u64::try_from(int(0)?).map_err(|_| at("negative frame".into()))?;
        let class_id = u16::try_from(int(1)?).map_err(|_| at("class_id out of range".into()))?;
        let corner = |k: usize| int(k).and_then(|v| i32::try_from(v).map_err(|_| at("coordinate out of range".into())));
        let b = CornerBox {
            x1: corner(2)?,
            y1: corner(3)?,
            x2: corner(4)?,
            y2: corner(5)?,
        };
        let track_id = match f.get(6) {
            Some(_) => u16::try_from(int(6)?).map_err(|_| at("track_id out of range".into()))?,
            None => 0,
        };
        let confidence = match f.get(7) {
            Some(s) => s.parse::<f32>().map_err(|_| at(format!("bad confidence {s:?}")))?,
            None => 1.0,
        };
        let rec = crate::events::corner_to_xywh(b)
            .and_then(|g| g.to_record(frame_time_us(frame, fps), class_id, confidence, track_id))
            .and_then(|r| r.validate().map(|_| r))
            .map_err(|e| at(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn format_corner_labels(labels: &[BoxRecord], fps: f64) -> String {
    let mut out = String::from("frame,class_id,x1,y1,x2,y2,track_id,class_confidence\n");
    for r in labels {
        let frame = (r.t as f64 * fps / 1e6).round() as u64;
        let c = crate::events::xywh_to_corner(r.geometry());
        let _ = writeln!(
            out,
            "{frame},{},{},{},{},{},{},{}",
            r.class_id, c.x1, c.y1, c.x2, c.y2, r.track_id, r.class_confidence
        );
    }
    out
}

fn convert_labels(paths: &Paths, a: ConvertLabelsArgs) -> Result<()> {
    let input = paths.input(&a.input);
    let bytes = std::fs::read(&input).map_err(|e| Error::io(&input, e))?;
    if bytes.starts_with(LABEL_MAGIC) {
        let labels = read_labels(&input)?;
        for r in &labels {
            let f = r.t as f64 * a.fps / 1e6;
            if (f - f.round()).abs() > 1e-6 {
                log::warn!("t = {} is not on a frame boundary at {} fps", r.t, a.fps);
            }
        }
        write(&a.output, format_corner_labels(&labels, a.fps))?;
        eprintln!("{} labels", labels.len());
    } else {
        let text = String::from_utf8(bytes).map_err(|e| Error::parse(input.display().to_string(), e.to_string()))?;
        let labels = parse_corner_labels(&text, a.fps, &input.display().to_string())?;
        write_labels(&a.output, &labels)?;
        eprintln!("{} labels", labels.len());
    }
    Ok(())
}

fn simulate_events(paths: &Paths, a: SimulateArgs) -> Result<()> {
    let video = load_frames(&paths.input(&a.frames), a.fps)?;
    let cfg = ConverterConfig {
        c_pos: a.c_pos,
        c_neg: a.c_neg,
        log_eps: a.log_eps,
    };
    let stream = frames_to_events(&video, &cfg)?;
    write_events(&a.output, &stream, format_or_guess(&a.format, &a.output)?)?;
    eprintln!("{} frames -> {} events", video.frames.len(), stream.len());
    Ok(())
}

fn train_cmd(paths: &Paths, a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let p = paths.input(p);
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            TrainConfig::from_toml(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(p) = &a.placement {
        cfg.model.placement = parse_placement(p)?;
    }
    let out = train(&cfg, Some(&a.out))?;
    println!("steps: {}", out.steps);
    println!("mAP@0.5: {:.4}", out.final_eval.map_50);
    println!("mAP@50:95: {:.4}", out.final_eval.map_50_95);
    Ok(())
}

fn load_model(paths: &Paths, a: &ModelArgs) -> Result<Detector> {
    let mut cfg = match (&a.model, &a.variant) {
        (Some(p), _) => ModelConfig::load(&paths.input(p))?,
        (None, Some(v)) => ModelConfig::preset(Variant::parse(v)?),
        (None, None) => ModelConfig::desk_scale(),
    };
    if let Some(p) = &a.placement {
        cfg.placement = parse_placement(p)?;
    }
    let det = Detector::new(&cfg, a.seed)?;
    if let Some(c) = &a.checkpoint {
        checkpoint::load(&det, &paths.input(c))?;
    }
    Ok(det)
}

fn window_spec(d: &DataArgs, t_bins: usize, h: usize, w: usize) -> Result<WindowSpec> {
    let dt = d.delta_t_ms.unwrap_or(DatasetPreset::parse(&d.preset)?.delta_t_ms());
    WindowSpec::new(dt, t_bins, h, w)
}

/// Windowed sequences with per-window targets.
struct Sequences {
    frames: Vec<FrameTensorSequence>,
    targets: Vec<Vec<Vec<GroundTruth>>>,
}

fn load_sequences(paths: &Paths, d: &DataArgs, model: &ModelConfig) -> Result<Sequences> {
    match &d.events {
        Some(ev) => {
            let ev = paths.input(ev);
            let (stream, report) = read_events(&ev, EventFormat::from_path(&ev), None)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            let spec = window_spec(d, model.t_bins, stream.height() as usize, stream.width() as usize)?;
            let labels = match &d.labels {
                Some(l) => read_labels(&paths.input(l))?,
                None => Vec::new(),
            };
            let mut range = WindowRange::covering(&stream, &spec);
            let last_label = labels.iter().map(|l| l.t / spec.delta_t_us + 1).max().unwrap_or(0) as usize;
            range.count = range.count.max(last_label);
            let frames = accumulate(&stream, &spec, range)?;
            let aligned = align_labels(&labels, &frames.window_starts, spec.delta_t_us);
            let targets = aligned.groups.iter().map(|g| g.iter().map(GroundTruth::from).collect()).collect();
            Ok(Sequences {
                frames: vec![frames],
                targets: vec![targets],
            })
        }
        None => {
            let cfg = SyntheticConfig {
                t_bins: model.t_bins,
                delta_t_ms: d.delta_t_ms.unwrap_or(SyntheticConfig::default().delta_t_ms),
                ..SyntheticConfig::default()
            };
            let samples = generate(&cfg, d.synthetic, d.data_seed)?;
            Ok(Sequences {
                frames: samples.iter().map(|s| s.frames.clone()).collect(),
                targets: samples.into_iter().map(|s| s.targets).collect(),
            })
        }
    }
}

fn detections_from_labels(labels: &[BoxRecord]) -> Vec<Detection> {
    labels
        .iter()
        .map(|r| Detection {
            bbox: BBox::from(r),
            class_id: r.class_id as usize,
            score: r.class_confidence as f64,
        })
        .collect()
}

fn print_map(r: &MapReport, json: bool) {
    if json {
        println!("{}", serde_json::json!({"map_50": r.map_50, "map_50_95": r.map_50_95, "map_75": r.map_75}));
    } else {
        println!("mAP@0.5: {:.4}", r.map_50);
        println!("mAP@50:95: {:.4}", r.map_50_95);
    }
}

fn eval_cmd(paths: &Paths, a: EvalArgs) -> Result<()> {
    if let Some(p) = &a.predictions {
        let labels_path = a
            .data
            .labels
            .as_ref()
            .ok_or_else(|| Error::invalid("eval", "--predictions needs --labels"))?;
        let preds = read_labels(&paths.input(p))?;
        let labels = read_labels(&paths.input(labels_path))?;
        let dt = a.data.delta_t_ms.unwrap_or(DatasetPreset::parse(&a.data.preset)?.delta_t_ms());
        let dt_us = WindowSpec::new(dt, 1, 1, 1)?.delta_t_us;
        let count = preds.iter().chain(&labels).map(|r| r.t / dt_us + 1).max().unwrap_or(0);
        let starts: Vec<u64> = (0..count).map(|k| k * dt_us).collect();
        let d: Vec<Vec<Detection>> = align_labels(&preds, &starts, dt_us).groups.iter().map(|g| detections_from_labels(g)).collect();
        let g: Vec<Vec<GroundTruth>> = align_labels(&labels, &starts, dt_us)
            .groups
            .iter()
            .map(|g| g.iter().map(GroundTruth::from).collect())
            .collect();
        print_map(&evaluate(&d, &g), a.json);
        return Ok(());
    }
    let det = load_model(paths, &a.model)?;
    let seqs = load_sequences(paths, &a.data, det.config())?;
    let head = HeadConfig::default();
    let mut all_d = Vec::new();
    let mut all_g = Vec::new();
    for (frames, targets) in seqs.frames.iter().zip(&seqs.targets) {
        let mut state = BlockState::new();
        for k in 0..frames.len() {
            let preds = det.forward(&mut ForwardCtx::inference(), &frames.tensor(k), &mut state)?;
            all_d.extend(decode(&preds, det.config().num_classes, &head)?);
            all_g.push(targets[k].clone());
        }
    }
    print_map(&evaluate(&all_d, &all_g), a.json);
    Ok(())
}

fn profile_cmd(paths: &Paths, a: ProfileArgs) -> Result<()> {
    let mut lines = String::new();
    if let Some(v) = &a.published {
        let variant = Variant::parse(v)?;
        let row = BACKBONE_ENERGY_ROWS.iter().find(|r| r.variant == variant).expect("every variant listed");
        let audit = audit_row(row);
        println!("{} backbone, from listed FLOPs {:.2} M and SOPs {:.2} M", variant.name(), row.flops_m.value, row.sops_m.value);
        println!("  E_ANN  {:.4} mJ (listed {})", audit.e_ann.mj(), row.e_ann.text());
        println!("  E_SNN  {:.4} mJ (listed {})", audit.e_snn.mj(), row.e_snn.text());
        println!("  E_HsVT {:.4} mJ (listed {})", audit.e_total.mj(), row.e_total.text());
        for f in &audit.flags {
            println!(
                "  FLAG {}: listed {} but the energy model gives {:.4} (tolerance {})",
                f.column, f.listed, f.computed, f.tolerance
            );
        }
        lines.push_str(&serde_json::to_string(&serde_json::json!({"record": "audit", "audit": audit})).expect("serialises"));
        lines.push('\n');
        let report = component_report(variant);
        println!("component split:\n{report}");
        lines.push_str(&report.to_json_lines());
        let refs = reference_energy();
        for m in &refs.models {
            println!("reference {}: {:.2} mJ total ({})", m.model, m.total_mj, refs.source);
        }
    } else {
        let det = load_model(paths, &a.model)?;
        let cfg = SyntheticConfig {
            width: a.width,
            height: a.height,
            t_bins: det.config().t_bins,
            windows_per_sequence: a.calibration_windows.max(1),
            max_size: SyntheticConfig::default().max_size.min(a.width.min(a.height).saturating_sub(1)),
            min_size: SyntheticConfig::default().min_size.min(a.width.min(a.height).saturating_sub(1)).max(1),
            ..SyntheticConfig::default()
        };
        let samples = generate(&cfg, 1, a.model.seed)?;
        let calib: Vec<Vec<Tensor>> = samples.iter().map(|s| (0..s.frames.len()).map(|k| s.frames.tensor(k)).collect()).collect();
        let report = profile_detector(&det, a.height, a.width, &calib)?;
        println!("{report}");
        lines = report.to_json_lines();
    }
    if let Some(p) = &a.jsonl {
        write(p, lines)?;
    }
    Ok(())
}

fn event_image(frames: &FrameTensorSequence, k: usize) -> Vec<f64> {
    let [c, h, w] = frames.frame_shape();
    let f = &frames.frames[k];
    (0..h * w).map(|i| (0..c).map(|ch| f[ch * h * w + i]).sum()).collect()
}

fn dump_attention(paths: &Paths, a: DumpAttentionArgs) -> Result<()> {
    let det = load_model(paths, &a.model)?;
    let mut data = a.data.clone();
    if data.events.is_none() {
        data.synthetic = 1;
    }
    let seqs = load_sequences(paths, &data, det.config())?;
    let frames = &seqs.frames[0];
    if a.window >= frames.len() {
        return Err(Error::invalid("window", format!("{} of {} windows", a.window, frames.len())));
    }
    let mut state = BlockState::new();
    let mut ctx = ForwardCtx::inference();
    for k in 0..=a.window {
        ctx.record_attention = k == a.window;
        det.forward(&mut ctx, &frames.tensor(k), &mut state)?;
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let [_, h, w] = frames.frame_shape();
    let events = event_image(frames, a.window);
    write(&a.out.join("events.pgm"), viz::heatmap_pgm(&events, h, w))?;
    for rec in &ctx.attention {
        let stage = rec.name.split('.').find(|s| s.starts_with("stage")).unwrap_or("stage");
        let kind = if rec.name.ends_with("block_attn") { "block" } else { "grid" };
        let stem = format!("{stage}_{kind}");
        write(&a.out.join(format!("{stem}.csv")), viz::attention_csv(rec))?;
        let (fh, fw, map) = viz::received_map(rec, 0)?;
        let up = viz::resize_nearest(&map, fh, fw, h, w);
        write(&a.out.join(format!("{stem}.pgm")), viz::heatmap_pgm(&up, h, w))?;
        write(&a.out.join(format!("{stem}_overlay.pgm")), viz::overlay_pgm(&events, &up, h, w))?;
    }
    eprintln!("{} attention maps written to {}", ctx.attention.len(), a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_labels_join_fps() {
        let l = parse_corner_labels("frame,class_id,x1,y1,x2,y2\n50,1,10,20,30,60\n", 25.0, "mem").unwrap();
        assert_eq!(l[0].t, 2_000_000);
        assert_eq!((l[0].x, l[0].y, l[0].w, l[0].h, l[0].class_id), (10, 20, 20, 40, 1));
        let back = parse_corner_labels(&format_corner_labels(&l, 25.0), 25.0, "mem").unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let e = parse_corner_labels("1,0,0,0,4,4\n2,0,zero,0,4,4\n", 30.0, "in.txt").unwrap_err();
        assert!(e.to_string().starts_with("in.txt:2"), "{e}");
        assert_eq!(exit_code(&e), 1);
    }

    #[test]
    fn sensor_parsing() {
        assert_eq!(parse_sensor("304x240").unwrap(), (304, 240));
        assert!(parse_sensor("304").is_err());
    }
}
