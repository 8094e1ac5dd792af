//! Differentiable primitives on [`Tensor`].
//!
//! Binary elementwise ops broadcast only over leading extents: the smaller
//! operand's shape must be a suffix of the larger one's.

use super::kernels::{self, gemm_nn, gemm_nt, gemm_tn, sigmoid};
use super::tensor::{numel_of, Tensor};
use crate::error::{Error, Result};

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if long[long.len() - short.len()..] != *short {
        return Err(Error::shape(op, format!("cannot broadcast {a:?} with {b:?}")));
    }
    Ok(long.to_vec())
}

/// Sum `g` (of `out_len` entries) down to the trailing block of `len` entries.
fn reduce_to(g: &[f64], len: usize) -> Vec<f64> {
    if g.len() == len {
        return g.to_vec();
    }
    let mut r = vec![0.0; len];
    for chunk in g.chunks_exact(len) {
        r.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
    }
    r
}

fn binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: fn(f64, f64) -> f64,
    da: fn(f64, f64) -> f64,
    db: fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let shape = broadcast_shape(op, a.shape(), b.shape())?;
    let n = numel_of(&shape);
    let (na, nb) = (a.numel(), b.numel());
    let (ad, bd) = (a.data(), b.data());
    let data: Vec<f64> = (0..n).map(|i| f(ad[i % na], bd[i % nb])).collect();
    Tensor::from_op(
        op,
        shape,
        data,
        &[a, b],
        Box::new(move |g, _out, inp| {
            let (ad, bd) = (inp[0].data(), inp[1].data());
            let (na, nb) = (ad.len(), bd.len());
            let ga = inp[0].requires_grad().then(|| {
                let full: Vec<f64> = g.iter().enumerate().map(|(i, gv)| gv * da(ad[i % na], bd[i % nb])).collect();
                reduce_to(&full, na)
            });
            let gb = inp[1].requires_grad().then(|| {
                let full: Vec<f64> = g.iter().enumerate().map(|(i, gv)| gv * db(ad[i % na], bd[i % nb])).collect();
                reduce_to(&full, nb)
            });
            vec![ga, gb]
        }),
    )
}

/// Elementwise map with derivative expressed through input `x` and output `y`.
fn unary(op: &'static str, a: &Tensor, f: impl Fn(f64) -> f64, df: fn(f64, f64) -> f64) -> Result<Tensor> {
    let data: Vec<f64> = a.data().iter().map(|&x| f(x)).collect();
    Tensor::from_op(
        op,
        a.shape().to_vec(),
        data,
        &[a],
        Box::new(move |g, out, inp| {
            let x = inp[0].data();
            vec![Some(g.iter().zip(x).zip(out).map(|((gv, &xv), &yv)| gv * df(xv, yv)).collect())]
        }),
    )
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        binary("add", self, other, |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        binary("sub", self, other, |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        binary("mul", self, other, |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        binary("div", self, other, |a, b| a / b, |_, b| 1.0 / b, |a, b| -a / (b * b))
    }

    pub fn minimum(&self, other: &Tensor) -> Result<Tensor> {
        binary(
            "minimum",
            self,
            other,
            f64::min,
            |a, b| if a <= b { 1.0 } else { 0.0 },
            |a, b| if a <= b { 0.0 } else { 1.0 },
        )
    }

    pub fn maximum(&self, other: &Tensor) -> Result<Tensor> {
        binary(
            "maximum",
            self,
            other,
            f64::max,
            |a, b| if a >= b { 1.0 } else { 0.0 },
            |a, b| if a >= b { 0.0 } else { 1.0 },
        )
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor> {
        unary("add_scalar", self, move |x| x + c, |_, _| 1.0)
    }

    pub fn mul_scalar(&self, c: f64) -> Result<Tensor> {
        let data: Vec<f64> = self.data().iter().map(|&x| x * c).collect();
        Tensor::from_op(
            "mul_scalar",
            self.shape().to_vec(),
            data,
            &[self],
            Box::new(move |g, _, _| vec![Some(g.iter().map(|v| v * c).collect())]),
        )
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.mul_scalar(-1.0)
    }

    pub fn clamp_min(&self, lo: f64) -> Result<Tensor> {
        let data: Vec<f64> = self.data().iter().map(|&x| x.max(lo)).collect();
        Tensor::from_op(
            "clamp_min",
            self.shape().to_vec(),
            data,
            &[self],
            Box::new(move |g, _, inp| {
                let x = inp[0].data();
                vec![Some(g.iter().zip(x).map(|(gv, &xv)| if xv >= lo { *gv } else { 0.0 }).collect())]
            }),
        )
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        unary("sigmoid", self, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn tanh(&self) -> Result<Tensor> {
        unary("tanh", self, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn gelu(&self) -> Result<Tensor> {
        unary("gelu", self, kernels::gelu, |x, _| kernels::gelu_grad(x))
    }

    pub fn relu(&self) -> Result<Tensor> {
        unary("relu", self, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn exp(&self) -> Result<Tensor> {
        unary("exp", self, f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Result<Tensor> {
        unary("ln", self, f64::ln, |x, _| 1.0 / x)
    }

    pub fn square(&self) -> Result<Tensor> {
        unary("square", self, |x| x * x, |x, _| 2.0 * x)
    }

    /// Elementwise binary cross-entropy between `sigmoid(self)` and a
    /// constant target, in the numerically stable logit form.
    pub fn bce_with_logits(&self, target: &Tensor) -> Result<Tensor> {
        if self.shape() != target.shape() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("{:?} vs {:?}", self.shape(), target.shape()),
            ));
        }
        let t = target.detach();
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(t.data())
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .collect();
        Tensor::from_op(
            "bce_with_logits",
            self.shape().to_vec(),
            data,
            &[self],
            Box::new(move |g, _, inp| {
                let x = inp[0].data();
                vec![Some(
                    g.iter()
                        .zip(x)
                        .zip(t.data())
                        .map(|((gv, &xv), &yv)| gv * (sigmoid(xv) - yv))
                        .collect(),
                )]
            }),
        )
    }

    pub fn sum(&self) -> Result<Tensor> {
        let s: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(
            "sum",
            Vec::new(),
            vec![s],
            &[self],
            Box::new(move |g, _, _| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel() as f64;
        self.sum()?.mul_scalar(1.0 / n)
    }

    /// Sum over the last axis (keeps rank - 1 extents).
    pub fn sum_last(&self) -> Result<Tensor> {
        let shape = self.shape();
        let d = *shape.last().ok_or_else(|| Error::shape("sum_last", "scalar input"))?;
        let out_shape = shape[..shape.len() - 1].to_vec();
        let data: Vec<f64> = self.data().chunks_exact(d).map(|c| c.iter().sum()).collect();
        Tensor::from_op(
            "sum_last",
            out_shape,
            data,
            &[self],
            Box::new(move |g, _, _| vec![Some(g.iter().flat_map(|&v| std::iter::repeat_n(v, d)).collect())]),
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel_of(shape) != self.numel() || shape.contains(&0) {
            return Err(Error::shape("reshape", format!("{:?} -> {shape:?}", self.shape())));
        }
        Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.data().to_vec(),
            &[self],
            Box::new(|g, _, _| vec![Some(g.to_vec())]),
        )
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let nd = self.ndim();
        let mut seen = vec![false; nd];
        if perm.len() != nd || perm.iter().any(|&p| p >= nd || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape("permute", format!("bad permutation {perm:?} for rank {nd}")));
        }
        let shape = self.shape().to_vec();
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let data = kernels::permute(self.data(), &shape, perm);
        let mut inverse = vec![0; nd];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let os = out_shape.clone();
        Tensor::from_op(
            "permute",
            out_shape,
            data,
            &[self],
            Box::new(move |g, _, _| vec![Some(kernels::permute(g, &os, &inverse))]),
        )
    }

    /// Swap the last two axes.
    pub fn transpose_last2(&self) -> Result<Tensor> {
        let nd = self.ndim();
        if nd < 2 {
            return Err(Error::shape("transpose_last2", "rank < 2"));
        }
        let mut perm: Vec<usize> = (0..nd).collect();
        perm.swap(nd - 1, nd - 2);
        self.permute(&perm)
    }

    /// `[m×k] · [k×n]`
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm_nn(self.data(), other.data(), &mut out, m, k, n);
        Tensor::from_op(
            "matmul",
            vec![m, n],
            out,
            &[self, other],
            Box::new(move |g, _, inp| {
                let ga = inp[0].requires_grad().then(|| {
                    let mut ga = vec![0.0; m * k];
                    gemm_nt(g, inp[1].data(), &mut ga, m, n, k);
                    ga
                });
                let gb = inp[1].requires_grad().then(|| {
                    let mut gb = vec![0.0; k * n];
                    gemm_tn(inp[0].data(), g, &mut gb, k, m, n);
                    gb
                });
                vec![ga, gb]
            }),
        )
    }

    /// Batched `[B×m×k] · [B×k×n]`.
    pub fn bmm(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("bmm", format!("{sa:?} x {sb:?}")));
        }
        let (bsz, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; bsz * m * n];
        for b in 0..bsz {
            gemm_nn(
                &self.data()[b * m * k..(b + 1) * m * k],
                &other.data()[b * k * n..(b + 1) * k * n],
                &mut out[b * m * n..(b + 1) * m * n],
                m,
                k,
                n,
            );
        }
        Tensor::from_op(
            "bmm",
            vec![bsz, m, n],
            out,
            &[self, other],
            Box::new(move |g, _, inp| {
                let (ad, bd) = (inp[0].data(), inp[1].data());
                let ga = inp[0].requires_grad().then(|| {
                    let mut ga = vec![0.0; bsz * m * k];
                    for b in 0..bsz {
                        gemm_nt(
                            &g[b * m * n..(b + 1) * m * n],
                            &bd[b * k * n..(b + 1) * k * n],
                            &mut ga[b * m * k..(b + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                    ga
                });
                let gb = inp[1].requires_grad().then(|| {
                    let mut gb = vec![0.0; bsz * k * n];
                    for b in 0..bsz {
                        gemm_tn(
                            &ad[b * m * k..(b + 1) * m * k],
                            &g[b * m * n..(b + 1) * m * n],
                            &mut gb[b * k * n..(b + 1) * k * n],
                            k,
                            m,
                            n,
                        );
                    }
                    gb
                });
                vec![ga, gb]
            }),
        )
    }

    /// `x[..., in] · w[in×out] (+ b[out])`, applied over all leading extents.
    pub fn linear(&self, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
        let shape = self.shape();
        let Some(&d_in) = shape.last() else {
            return Err(Error::shape("linear", "scalar input"));
        };
        if w.ndim() != 2 || w.shape()[0] != d_in {
            return Err(Error::shape("linear", format!("input {shape:?} with weight {:?}", w.shape())));
        }
        let d_out = w.shape()[1];
        let rows = self.numel() / d_in;
        let y = self.reshape(&[rows, d_in])?.matmul(w)?;
        let y = match b {
            Some(b) => y.add(b)?,
            None => y,
        };
        let mut out_shape = shape.to_vec();
        *out_shape.last_mut().expect("non-empty") = d_out;
        y.reshape(&out_shape)
    }

    /// Concatenate along `axis`.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let nd = first.ndim();
        if axis >= nd {
            return Err(Error::shape("concat", format!("axis {axis} out of range for rank {nd}")));
        }
        for p in parts {
            let ok = p.ndim() == nd
                && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape("concat", format!("{:?} vs {:?}", p.shape(), first.shape())));
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let widths: Vec<usize> = parts.iter().map(|p| p.shape()[axis] * inner).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
        Tensor::from_op(
            "concat",
            shape,
            data,
            parts,
            Box::new(move |g, _, inp| {
                let mut grads: Vec<Vec<f64>> = widths.iter().map(|&w| Vec::with_capacity(outer * w)).collect();
                for o in 0..outer {
                    let mut off = o * total;
                    for (gi, &w) in grads.iter_mut().zip(&widths) {
                        gi.extend_from_slice(&g[off..off + w]);
                        off += w;
                    }
                }
                grads
                    .into_iter()
                    .zip(inp)
                    .map(|(gv, t)| t.requires_grad().then_some(gv))
                    .collect()
            }),
        )
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::shape("narrow", format!("axis {axis} [{start}, +{len}) of {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src_w = shape[axis] * inner;
        let (off, w) = (start * inner, len * inner);
        let mut data = Vec::with_capacity(outer * w);
        for o in 0..outer {
            data.extend_from_slice(&self.data()[o * src_w + off..o * src_w + off + w]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let n = self.numel();
        Tensor::from_op(
            "narrow",
            out_shape,
            data,
            &[self],
            Box::new(move |g, _, _| {
                let mut gi = vec![0.0; n];
                for o in 0..outer {
                    gi[o * src_w + off..o * src_w + off + w].copy_from_slice(&g[o * w..(o + 1) * w]);
                }
                vec![Some(gi)]
            }),
        )
    }

    /// Rows `idx` of a 2-D tensor, in order (repeats allowed).
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Tensor> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(Error::shape("gather_rows", format!("expected 2-D input, got {shape:?}")));
        }
        let (rows, d) = (shape[0], shape[1]);
        if idx.is_empty() || idx.iter().any(|&i| i >= rows) {
            return Err(Error::shape("gather_rows", format!("indices out of range for {rows} rows")));
        }
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&self.data()[i * d..(i + 1) * d]);
        }
        let idx = idx.to_vec();
        let n = self.numel();
        Tensor::from_op(
            "gather_rows",
            vec![idx.len(), d],
            data,
            &[self],
            Box::new(move |g, _, _| {
                let mut gi = vec![0.0; n];
                for (k, &i) in idx.iter().enumerate() {
                    gi[i * d..(i + 1) * d].iter_mut().zip(&g[k * d..(k + 1) * d]).for_each(|(a, b)| *a += b);
                }
                vec![Some(gi)]
            }),
        )
    }

    /// Softmax over the last axis, computed with max subtraction.
    pub fn softmax_last(&self) -> Result<Tensor> {
        let d = *self.shape().last().ok_or_else(|| Error::shape("softmax", "scalar input"))?;
        let mut data = self.data().to_vec();
        for row in data.chunks_exact_mut(d) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        Tensor::from_op(
            "softmax",
            self.shape().to_vec(),
            data,
            &[self],
            Box::new(move |g, y, _| {
                let mut gi = vec![0.0; g.len()];
                for ((gr, yr), out) in g.chunks_exact(d).zip(y.chunks_exact(d)).zip(gi.chunks_exact_mut(d)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((o, &gv), &yv) in out.iter_mut().zip(gr).zip(yr) {
                        *o = yv * (gv - dot);
                    }
                }
                vec![Some(gi)]
            }),
        )
    }
}

/// Softmax along an arbitrary axis.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let nd = x.ndim();
    if axis >= nd {
        return Err(Error::shape("softmax", format!("axis {axis} for rank {nd}")));
    }
    if axis == nd - 1 {
        return x.softmax_last();
    }
    let mut perm: Vec<usize> = (0..nd).collect();
    perm.swap(axis, nd - 1);
    x.permute(&perm)?.softmax_last()?.permute(&perm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_hand_product() {
        let a = t(&[1, 2], &[1.0, 2.0]);
        let b = t(&[2, 1], &[3.0, 4.0]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_identity() {
        let eye = t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let a = t(&[3, 2], &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(eye.matmul(&a).unwrap().data(), a.data());
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = t(&[2, 3], &[0.0; 6]);
        assert!(matches!(a.matmul(&a), Err(Error::Shape { .. })));
    }

    #[test]
    fn broadcast_leading_only() {
        let a = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let b = t(&[3], &[10., 20., 30.]);
        assert_eq!(a.add(&b).unwrap().data(), &[11., 22., 33., 14., 25., 36.]);
        let c = t(&[2], &[1., 1.]);
        assert!(a.add(&c).is_err());
    }

    #[test]
    fn softmax_symmetric_and_shift_invariant() {
        let x = t(&[2], &[0.0, 0.0]);
        assert_eq!(x.softmax_last().unwrap().data(), &[0.5, 0.5]);
        let a = t(&[3], &[0.3, -1.2, 2.0]);
        let b = a.add_scalar(7.5).unwrap();
        let (sa, sb) = (a.softmax_last().unwrap(), b.softmax_last().unwrap());
        for (x, y) in sa.data().iter().zip(sb.data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_activations() {
        let z = Tensor::scalar(0.0);
        assert_eq!(z.sigmoid().unwrap().item(), 0.5);
        assert_eq!(z.tanh().unwrap().item(), 0.0);
    }

    #[test]
    fn non_finite_is_an_error() {
        let x = t(&[1], &[1000.0]);
        assert!(matches!(x.exp(), Err(Error::NonFinite { op: "exp" })));
        let z = t(&[1], &[0.0]);
        assert!(matches!(z.ln(), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn concat_then_narrow_roundtrip() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        let b = t(&[2, 1], &[9., 8.]);
        let c = Tensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.data(), &[1., 2., 9., 3., 4., 8.]);
        assert_eq!(c.narrow(1, 0, 2).unwrap().data(), a.data());
        assert_eq!(c.narrow(1, 2, 1).unwrap().data(), b.data());
    }

    #[test]
    fn backward_sum_and_zero() {
        let p = Tensor::leaf(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        p.sum().unwrap().backward().unwrap();
        assert_eq!(p.grad(), vec![1.0, 1.0, 1.0]);

        let q = Tensor::leaf(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        q.mul_scalar(0.0).unwrap().sum().unwrap().backward().unwrap();
        assert_eq!(q.grad(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn unreachable_leaf_gets_zero() {
        let p = Tensor::leaf(&[2], vec![1.0, 2.0]).unwrap();
        let q = Tensor::leaf(&[2], vec![3.0, 4.0]).unwrap();
        p.square().unwrap().sum().unwrap().backward().unwrap();
        assert!(!q.has_grad());
        assert_eq!(q.grad(), vec![0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let p = Tensor::leaf(&[2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(p.backward(), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // y = x*x + x  => dy/dx = 2x + 1
        let x = Tensor::leaf(&[1], vec![3.0]).unwrap();
        let y = x.mul(&x).unwrap().add(&x).unwrap().sum().unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad(), vec![7.0]);
    }

    #[test]
    fn gather_rows_scatters_gradient() {
        let x = Tensor::leaf(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = x.gather_rows(&[2, 0, 2]).unwrap();
        assert_eq!(y.data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        y.sum().unwrap().backward().unwrap();
        assert_eq!(x.grad(), vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
        assert!(x.gather_rows(&[3]).is_err());
    }
}
