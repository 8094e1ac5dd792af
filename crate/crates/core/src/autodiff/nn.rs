//! Fused network primitives: convolution, normalisation, resampling.

use super::kernels::{gemm_nn, gemm_nt, gemm_tn};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn cols(&self) -> usize {
        self.c * self.kh * self.kw
    }
    fn positions(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let p = g.positions();
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        dst[oy * g.wo + ox] = if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                            plane[iy as usize * g.w + ix as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let p = g.positions();
    for ci in 0..g.c {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            plane[iy as usize * g.w + ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation, NCHW input and OIHW weights.
pub fn conv2d(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
        return Err(Error::shape("conv2d", format!("input {xs:?} with weight {ws:?}")));
    }
    if stride == 0 {
        return Err(Error::shape("conv2d", "stride must be positive"));
    }
    let (n, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
    let (o, kh, kw) = (ws[0], ws[2], ws[3]);
    if kh > h + 2 * padding || kw > wd + 2 * padding {
        return Err(Error::shape(
            "conv2d",
            format!("kernel {kh}x{kw} larger than padded input {}x{}", h + 2 * padding, wd + 2 * padding),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [o] {
            return Err(Error::shape("conv2d", format!("bias {:?} for {o} outputs", b.shape())));
        }
    }
    let g = ConvGeom {
        n,
        c,
        h,
        w: wd,
        kh,
        kw,
        stride,
        pad: padding,
        ho: (h + 2 * padding - kh) / stride + 1,
        wo: (wd + 2 * padding - kw) / stride + 1,
    };
    let (k, p) = (g.cols(), g.positions());
    let mut out = vec![0.0; n * o * p];
    let mut cols = vec![0.0; k * p];
    for b in 0..n {
        im2col(&x.data()[b * c * h * wd..(b + 1) * c * h * wd], &g, &mut cols);
        let dst = &mut out[b * o * p..(b + 1) * o * p];
        gemm_nn(w.data(), &cols, dst, o, k, p);
        if let Some(bias) = bias {
            for (oc, row) in dst.chunks_exact_mut(p).enumerate() {
                let bv = bias.data()[oc];
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    let mut inputs: Vec<&Tensor> = vec![x, w];
    if let Some(b) = bias {
        inputs.push(b);
    }
    Tensor::from_op(
        "conv2d",
        vec![n, o, g.ho, g.wo],
        out,
        &inputs,
        Box::new(move |gout, _, inp| {
            let (xd, wdat) = (inp[0].data(), inp[1].data());
            let mut dx = inp[0].requires_grad().then(|| vec![0.0; xd.len()]);
            let mut dw = inp[1].requires_grad().then(|| vec![0.0; wdat.len()]);
            let mut db = inp.get(2).filter(|t| t.requires_grad()).map(|_| vec![0.0; o]);
            let mut cols = vec![0.0; k * p];
            let mut dcols = vec![0.0; k * p];
            let chw = g.c * g.h * g.w;
            for b in 0..g.n {
                let gb = &gout[b * o * p..(b + 1) * o * p];
                if let Some(dw) = dw.as_mut() {
                    im2col(&xd[b * chw..(b + 1) * chw], &g, &mut cols);
                    gemm_nt(gb, &cols, dw, o, p, k);
                }
                if let Some(dx) = dx.as_mut() {
                    dcols.iter_mut().for_each(|v| *v = 0.0);
                    gemm_tn(wdat, gb, &mut dcols, k, o, p);
                    col2im(&dcols, &g, &mut dx[b * chw..(b + 1) * chw]);
                }
                if let Some(db) = db.as_mut() {
                    for (oc, row) in gb.chunks_exact(p).enumerate() {
                        db[oc] += row.iter().sum::<f64>();
                    }
                }
            }
            let mut r = vec![dx, dw];
            if inp.len() == 3 {
                r.push(db);
            }
            r
        }),
    )
}

/// Layer normalisation over the last axis with affine scale and shift.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let d = *x.shape().last().ok_or_else(|| Error::shape("layer_norm", "scalar input"))?;
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::shape(
            "layer_norm",
            format!("normalized extent {d} with affine {:?}/{:?}", gamma.shape(), beta.shape()),
        ));
    }
    let rows = x.numel() / d;
    let mut xhat = vec![0.0; x.numel()];
    let mut inv_std = vec![0.0; rows];
    for (r, (src, dst)) in x.data().chunks_exact(d).zip(xhat.chunks_exact_mut(d)).enumerate() {
        let mean = src.iter().sum::<f64>() / d as f64;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[r] = is;
        for (o, &v) in dst.iter_mut().zip(src) {
            *o = (v - mean) * is;
        }
    }
    let (gd, bd) = (gamma.data(), beta.data());
    let out: Vec<f64> = xhat
        .chunks_exact(d)
        .flat_map(|row| row.iter().zip(gd).zip(bd).map(|((v, g), b)| v * g + b))
        .collect();
    Tensor::from_op(
        "layer_norm",
        x.shape().to_vec(),
        out,
        &[x, gamma, beta],
        Box::new(move |g, _, inp| {
            let gd = inp[1].data();
            let mut dx = vec![0.0; g.len()];
            let mut dgamma = vec![0.0; d];
            let mut dbeta = vec![0.0; d];
            for r in 0..rows {
                let gr = &g[r * d..(r + 1) * d];
                let xr = &xhat[r * d..(r + 1) * d];
                let mut sum_gy = 0.0;
                let mut sum_gy_x = 0.0;
                for j in 0..d {
                    let gy = gr[j] * gd[j];
                    sum_gy += gy;
                    sum_gy_x += gy * xr[j];
                    dgamma[j] += gr[j] * xr[j];
                    dbeta[j] += gr[j];
                }
                let (m1, m2) = (sum_gy / d as f64, sum_gy_x / d as f64);
                for j in 0..d {
                    dx[r * d + j] = inv_std[r] * (gr[j] * gd[j] - m1 - xr[j] * m2);
                }
            }
            vec![
                inp[0].requires_grad().then_some(dx),
                inp[1].requires_grad().then_some(dgamma),
                inp[2].requires_grad().then_some(dbeta),
            ]
        }),
    )
}

/// Batch statistics of a normalisation pass, per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased variance (divided by the element count).
    pub var: Vec<f64>,
    pub count: usize,
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Batch normalisation with batch statistics over every axis but `axis`.
pub fn batch_norm_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    axis: usize,
    eps: f64,
) -> Result<(Tensor, BatchStats)> {
    if axis >= x.ndim() {
        return Err(Error::shape("batch_norm", format!("channel axis {axis} of {:?}", x.shape())));
    }
    let (outer, c, inner) = split_axis(x.shape(), axis);
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape("batch_norm", format!("{c} channels with affine {:?}", gamma.shape())));
    }
    let m = (outer * inner) as f64;
    let xd = x.data();
    let idx = move |o: usize, ch: usize, i: usize| (o * c + ch) * inner + i;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for o in 0..outer {
            for i in 0..inner {
                s += xd[idx(o, ch, i)];
            }
        }
        mean[ch] = s / m;
        let mut v = 0.0;
        for o in 0..outer {
            for i in 0..inner {
                let dv = xd[idx(o, ch, i)] - mean[ch];
                v += dv * dv;
            }
        }
        var[ch] = v / m;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; xd.len()];
    let mut out = vec![0.0; xd.len()];
    let (gd, bd) = (gamma.data(), beta.data());
    for o in 0..outer {
        for ch in 0..c {
            for i in 0..inner {
                let k = idx(o, ch, i);
                xhat[k] = (xd[k] - mean[ch]) * inv_std[ch];
                out[k] = xhat[k] * gd[ch] + bd[ch];
            }
        }
    }
    let stats = BatchStats {
        mean,
        var,
        count: outer * inner,
    };
    let y = Tensor::from_op(
        "batch_norm",
        x.shape().to_vec(),
        out,
        &[x, gamma, beta],
        Box::new(move |g, _, inp| {
            let gd = inp[1].data();
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            for o in 0..outer {
                for ch in 0..c {
                    for i in 0..inner {
                        let k = idx(o, ch, i);
                        dgamma[ch] += g[k] * xhat[k];
                        dbeta[ch] += g[k];
                    }
                }
            }
            let mut dx = vec![0.0; g.len()];
            for o in 0..outer {
                for ch in 0..c {
                    let (m1, m2) = (dbeta[ch] / m, dgamma[ch] / m);
                    for i in 0..inner {
                        let k = idx(o, ch, i);
                        dx[k] = gd[ch] * inv_std[ch] * (g[k] - m1 - xhat[k] * m2);
                    }
                }
            }
            vec![
                inp[0].requires_grad().then_some(dx),
                inp[1].requires_grad().then_some(dgamma),
                inp[2].requires_grad().then_some(dbeta),
            ]
        }),
    )?;
    Ok((y, stats))
}

/// Batch normalisation with fixed statistics (inference mode).
pub fn batch_norm_eval(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    axis: usize,
    mean: &[f64],
    var: &[f64],
    eps: f64,
) -> Result<Tensor> {
    if axis >= x.ndim() {
        return Err(Error::shape("batch_norm", format!("channel axis {axis} of {:?}", x.shape())));
    }
    let (_, c, inner) = split_axis(x.shape(), axis);
    if mean.len() != c || var.len() != c || gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape("batch_norm", format!("{c} channels vs stored statistics")));
    }
    let scale: Vec<f64> = (0..c).map(|ch| gamma.data()[ch] / (var[ch] + eps).sqrt()).collect();
    let shift: Vec<f64> = (0..c).map(|ch| beta.data()[ch] - mean[ch] * scale[ch]).collect();
    let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mean = mean.to_vec();
    let ch_of = move |k: usize| (k / inner) % c;
    let out: Vec<f64> = x.data().iter().enumerate().map(|(k, v)| v * scale[ch_of(k)] + shift[ch_of(k)]).collect();
    Tensor::from_op(
        "batch_norm_eval",
        x.shape().to_vec(),
        out,
        &[x, gamma, beta],
        Box::new(move |g, _, inp| {
            let (xd, gd) = (inp[0].data(), inp[1].data());
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            let mut dx = vec![0.0; g.len()];
            for (k, &gv) in g.iter().enumerate() {
                let ch = ch_of(k);
                dx[k] = gv * gd[ch] * inv[ch];
                dgamma[ch] += gv * (xd[k] - mean[ch]) * inv[ch];
                dbeta[ch] += gv;
            }
            vec![
                inp[0].requires_grad().then_some(dx),
                inp[1].requires_grad().then_some(dgamma),
                inp[2].requires_grad().then_some(dbeta),
            ]
        }),
    )
}

/// Zero-pad the two spatial axes of an NHWC tensor at the bottom/right.
pub fn pad_hw(x: &Tensor, new_h: usize, new_w: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 || new_h < s[1] || new_w < s[2] {
        return Err(Error::shape("pad_hw", format!("{s:?} -> {new_h}x{new_w}")));
    }
    if new_h == s[1] && new_w == s[2] {
        return Ok(x.clone());
    }
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut out = vec![0.0; n * new_h * new_w * c];
    for b in 0..n {
        for y in 0..h {
            let src = &x.data()[((b * h + y) * w) * c..((b * h + y) * w + w) * c];
            let off = ((b * new_h + y) * new_w) * c;
            out[off..off + w * c].copy_from_slice(src);
        }
    }
    Tensor::from_op(
        "pad_hw",
        vec![n, new_h, new_w, c],
        out,
        &[x],
        Box::new(move |g, _, _| {
            let mut gi = Vec::with_capacity(n * h * w * c);
            for b in 0..n {
                for y in 0..h {
                    let off = ((b * new_h + y) * new_w) * c;
                    gi.extend_from_slice(&g[off..off + w * c]);
                }
            }
            vec![Some(gi)]
        }),
    )
}

/// Keep the top-left `h × w` region of an NHWC tensor.
pub fn crop_hw(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 || h > s[1] || w > s[2] || h == 0 || w == 0 {
        return Err(Error::shape("crop_hw", format!("{s:?} -> {h}x{w}")));
    }
    if h == s[1] && w == s[2] {
        return Ok(x.clone());
    }
    x.narrow(1, 0, h)?.narrow(2, 0, w)
}

/// Nearest-neighbour 2× upsampling of an NCHW tensor.
pub fn upsample2x(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::shape("upsample2x", format!("{s:?}")));
    }
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0; n * c * h2 * w2];
    for plane in 0..n * c {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * h2 * w2..(plane + 1) * h2 * w2];
        for y in 0..h2 {
            for xx in 0..w2 {
                dst[y * w2 + xx] = src[(y / 2) * w + xx / 2];
            }
        }
    }
    Tensor::from_op(
        "upsample2x",
        vec![n, c, h2, w2],
        out,
        &[x],
        Box::new(move |g, _, _| {
            let mut gi = vec![0.0; n * c * h * w];
            for plane in 0..n * c {
                let src = &g[plane * h2 * w2..(plane + 1) * h2 * w2];
                let dst = &mut gi[plane * h * w..(plane + 1) * h * w];
                for y in 0..h2 {
                    for xx in 0..w2 {
                        dst[(y / 2) * w + xx / 2] += src[y * w2 + xx];
                    }
                }
            }
            vec![Some(gi)]
        }),
    )
}

/// NCHW → NHWC.
pub fn to_channels_last(x: &Tensor) -> Result<Tensor> {
    x.permute(&[0, 2, 3, 1])
}

/// NHWC → NCHW.
pub fn to_channels_first(x: &Tensor) -> Result<Tensor> {
    x.permute(&[0, 3, 1, 2])
}
