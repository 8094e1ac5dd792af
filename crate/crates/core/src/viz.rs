//! Attention-map export: raw weights as CSV, spatial heatmaps as PGM.

use std::fmt::Write as _;

use crate::backbone::{index_map, PartitionKind};
use crate::error::{Error, Result};
use crate::esim::encode_pgm;
use crate::layers::AttentionRecord;

pub fn partition_kind(rec: &AttentionRecord) -> Result<PartitionKind> {
    if rec.name.ends_with("block_attn") {
        Ok(PartitionKind::Window)
    } else if rec.name.ends_with("grid_attn") {
        Ok(PartitionKind::Grid)
    } else {
        Err(Error::invalid("attention record", format!("{} is neither block nor grid attention", rec.name)))
    }
}

fn batch(rec: &AttentionRecord) -> usize {
    rec.weights.len() / (rec.groups * rec.heads * rec.tokens * rec.tokens).max(1)
}

/// One CSV row per (image, group, head, query): the query's weights over
/// the keys of its group.
pub fn attention_csv(rec: &AttentionRecord) -> String {
    let t = rec.tokens;
    let mut out = String::from("image,group,head,query");
    for k in 0..t {
        let _ = write!(out, ",k{k}");
    }
    out.push('\n');
    for (row, w) in rec.weights.chunks(t).enumerate() {
        let q = row % t;
        let h = (row / t) % rec.heads;
        let b = row / (t * rec.heads);
        let _ = write!(out, "{},{},{h},{q}", b / rec.groups, b % rec.groups);
        for v in w {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Attention each position receives, averaged over heads and the queries of
/// its group, on the unpadded `h × w` feature map of image `image`.
pub fn received_map(rec: &AttentionRecord, image: usize) -> Result<(usize, usize, Vec<f64>)> {
    let (ph, pw) = rec.padded_hw;
    let (h, w) = rec.hw;
    let idx = index_map(partition_kind(rec)?, ph, pw, rec.partition)?;
    let t = rec.tokens;
    if idx.len() != rec.groups || idx.first().map_or(0, Vec::len) != t || image >= batch(rec) {
        return Err(Error::invalid("attention record", format!("{} does not match its partition", rec.name)));
    }
    let mut full = vec![0.0; ph * pw];
    let scale = 1.0 / (rec.heads * t) as f64;
    for (g, tokens) in idx.iter().enumerate() {
        let b = image * rec.groups + g;
        for head in 0..rec.heads {
            let base = (b * rec.heads + head) * t * t;
            for q in 0..t {
                let row = &rec.weights[base + q * t..base + (q + 1) * t];
                for (k, &px) in tokens.iter().enumerate() {
                    full[px] += row[k] * scale;
                }
            }
        }
    }
    let map = (0..h).flat_map(|y| (0..w).map(move |x| (y, x))).map(|(y, x)| full[y * pw + x]).collect();
    Ok((h, w, map))
}

/// Nearest-neighbour resize.
pub fn resize_nearest(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    (0..oh)
        .flat_map(|y| (0..ow).map(move |x| (y, x)))
        .map(|(y, x)| src[(y * h / oh) * w + x * w / ow])
        .collect()
}

/// Min-max scale to bytes; a constant map becomes mid-gray.
pub fn to_gray(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![128; values.len()];
    }
    values.iter().map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8).collect()
}

pub fn heatmap_pgm(values: &[f64], h: usize, w: usize) -> Vec<u8> {
    encode_pgm(w, h, &to_gray(values))
}

/// Even blend of the event-count image and the heatmap, both min-max scaled.
pub fn overlay_pgm(events: &[f64], heat: &[f64], h: usize, w: usize) -> Vec<u8> {
    let (e, a) = (to_gray(events), to_gray(heat));
    let px: Vec<u8> = e.iter().zip(&a).map(|(&e, &a)| ((e as u16 + a as u16) / 2) as u8).collect();
    encode_pgm(w, h, &px)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(tokens: usize, weights: Vec<f64>) -> AttentionRecord {
        AttentionRecord {
            name: "s.block_attn".into(),
            groups: 4,
            heads: 1,
            tokens,
            weights,
            padded_hw: (2, 2),
            hw: (2, 2),
            partition: 1,
        }
    }

    #[test]
    fn single_token_windows_give_uniform_map() {
        let rec = record(1, vec![1.0; 4]);
        let (h, w, m) = received_map(&rec, 0).unwrap();
        assert_eq!((h, w), (2, 2));
        assert_eq!(m, vec![1.0; 4]);
        assert_eq!(to_gray(&m), vec![128; 4]);
    }

    #[test]
    fn csv_rows_sum_to_one() {
        let rec = AttentionRecord {
            groups: 1,
            partition: 2,
            ..record(4, (0..16).map(|i| if i % 4 == i / 4 { 0.7 } else { 0.1 }).collect())
        };
        let csv = attention_csv(&rec);
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 4);
        for r in rows {
            let s: f64 = r.split(',').skip(4).map(|v| v.parse::<f64>().unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn resize_keeps_dimensions() {
        let up = resize_nearest(&[1.0, 2.0, 3.0, 4.0], 2, 2, 4, 6);
        assert_eq!(up.len(), 24);
        assert_eq!((up[0], up[5], up[23]), (1.0, 2.0, 4.0));
        let pgm = overlay_pgm(&up, &up, 4, 6);
        assert!(pgm.starts_with(b"P5\n6 4\n255\n"));
    }
}
