use crate::autodiff::{Module, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::layers::{AttentionRecord, ForwardCtx, Init, Linear};
use crate::profiler::OpCostRecord;

/// Additive key bias for padded tokens.
pub const MASK_BIAS: f64 = -1e30;

/// Scaled dot-product self-attention over token groups `[B × T × C]`.
#[derive(Clone, Debug)]
pub struct MultiHeadSelfAttention {
    pub name: String,
    pub qkv: Linear,
    pub proj: Linear,
    pub heads: usize,
}

impl MultiHeadSelfAttention {
    pub fn new(init: &mut Init, name: &str, channels: usize, heads: usize) -> Result<Self> {
        if heads == 0 || channels % heads != 0 {
            return Err(Error::invalid("attention", format!("{channels} channels not divisible by {heads} heads")));
        }
        Ok(MultiHeadSelfAttention {
            name: name.to_string(),
            qkv: Linear::new(init, &format!("{name}.qkv"), channels, 3 * channels, true),
            proj: Linear::new(init, &format!("{name}.proj"), channels, channels, true),
            heads,
        })
    }

    pub fn channels(&self) -> usize {
        self.proj.d_out()
    }

    /// `key_valid` is `[B × T]` with 1 for real tokens and 0 for padding.
    /// Returns the output tokens and the attention weights
    /// `[B·heads × T × T]`.
    pub fn attend(&self, ctx: &ForwardCtx, x: &Tensor, key_valid: Option<&[f64]>) -> Result<(Tensor, Tensor)> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.channels() {
            return Err(Error::shape(
                "attention",
                format!("expected [B, T, {}], got {s:?}", self.channels()),
            ));
        }
        let (b, t, c) = (s[0], s[1], s[2]);
        let (nh, d) = (self.heads, c / self.heads);
        let qkv = self
            .qkv
            .forward(ctx, x)?
            .reshape(&[b, t, 3, nh, d])?
            .permute(&[2, 0, 3, 1, 4])?
            .reshape(&[3, b * nh, t, d])?;
        let part = |i: usize| qkv.narrow(0, i, 1).and_then(|p| p.reshape(&[b * nh, t, d]));
        let (q, k, v) = (part(0)?, part(1)?, part(2)?);
        let mut scores = q.bmm(&k.transpose_last2()?)?.mul_scalar(1.0 / (d as f64).sqrt())?;
        if let Some(valid) = key_valid {
            if valid.len() != b * t {
                return Err(Error::shape("attention", format!("mask of {} for {b}x{t} tokens", valid.len())));
            }
            if valid.iter().any(|v| *v == 0.0) {
                let mut bias = vec![0.0; b * nh * t * t];
                for (row, chunk) in bias.chunks_mut(t).enumerate() {
                    let group = row / (nh * t);
                    for (j, v) in chunk.iter_mut().enumerate() {
                        if valid[group * t + j] == 0.0 {
                            *v = MASK_BIAS;
                        }
                    }
                }
                scores = scores.add(&Tensor::new(&[b * nh, t, t], bias)?)?;
            }
        }
        let weights = scores.softmax_last()?;
        let out = weights
            .bmm(&v)?
            .reshape(&[b, nh, t, d])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[b, t, c])?;
        Ok((self.proj.forward(ctx, &out)?, weights))
    }

    /// Runs attention and, when the context asks for it, keeps the weights.
    pub fn forward(
        &self,
        ctx: &mut ForwardCtx,
        x: &Tensor,
        key_valid: Option<&[f64]>,
        meta: (usize, (usize, usize), (usize, usize), usize),
    ) -> Result<Tensor> {
        let (y, w) = self.attend(ctx, x, key_valid)?;
        if ctx.record_attention {
            let (groups_per_image, padded_hw, hw, partition) = meta;
            ctx.attention.push(AttentionRecord {
                name: self.name.clone(),
                groups: groups_per_image,
                heads: self.heads,
                tokens: x.shape()[1],
                weights: w.to_vec(),
                padded_hw,
                hw,
                partition,
            });
        }
        Ok(y)
    }

    /// Projection MACs plus the two token-mixing products for `groups`
    /// groups of `tokens` tokens.
    pub fn costs(&self, groups: usize, tokens: usize, out: &mut Vec<OpCostRecord>) {
        let c = self.channels() as u64;
        let rows = (groups * tokens) as u64;
        let t = tokens as u64;
        out.push(OpCostRecord::ann(format!("{}.qkv", self.name), "linear", rows * self.qkv.macs_per_row()));
        out.push(OpCostRecord::ann(format!("{}.qk", self.name), "matmul", groups as u64 * t * t * c));
        out.push(OpCostRecord::ann(format!("{}.av", self.name), "matmul", groups as u64 * t * t * c));
        out.push(OpCostRecord::ann(format!("{}.proj", self.name), "linear", rows * self.proj.macs_per_row()));
    }
}

impl Module for MultiHeadSelfAttention {
    fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.qkv.parameters(out);
        self.proj.parameters(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;

    fn tokens(b: usize, t: usize, c: usize, seed: f64) -> Tensor {
        Tensor::leaf(&[b, t, c], (0..b * t * c).map(|i| ((i as f64 + seed) * 0.37).sin()).collect()).unwrap()
    }

    #[test]
    fn rows_sum_to_one() {
        let mut init = Init::new(1);
        let a = MultiHeadSelfAttention::new(&mut init, "a", 8, 2).unwrap();
        let (_, w) = a.attend(&ForwardCtx::inference(), &tokens(3, 5, 8, 0.0), None).unwrap();
        assert_eq!(w.shape(), &[6, 5, 5]);
        for row in w.data().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_token_returns_value_projection() {
        let mut init = Init::new(2);
        let a = MultiHeadSelfAttention::new(&mut init, "a", 4, 1).unwrap();
        let x = tokens(1, 1, 4, 1.0);
        let ctx = ForwardCtx::inference();
        let (y, _) = a.attend(&ctx, &x, None).unwrap();
        let qkv = a.qkv.forward(&ctx, &x).unwrap();
        let v = qkv.narrow(2, 8, 4).unwrap();
        let expect = a.proj.forward(&ctx, &v).unwrap();
        for (p, q) in y.data().iter().zip(expect.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_keys_get_zero_weight() {
        let mut init = Init::new(3);
        let a = MultiHeadSelfAttention::new(&mut init, "a", 4, 2).unwrap();
        let valid = [1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        let (_, w) = a.attend(&ForwardCtx::inference(), &tokens(2, 3, 4, 0.5), Some(&valid)).unwrap();
        for (r, row) in w.data().chunks(3).enumerate() {
            let group = r / 6;
            for j in 0..3 {
                if valid[group * 3 + j] == 0.0 {
                    assert_eq!(row[j], 0.0);
                }
            }
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn head_divisibility() {
        assert!(MultiHeadSelfAttention::new(&mut Init::new(0), "a", 6, 4).is_err());
    }

    #[test]
    fn gradient_check() {
        let mut init = Init::new(4);
        let a = MultiHeadSelfAttention::new(&mut init, "a", 4, 2).unwrap();
        let params = a.param_list();
        let mut inputs = vec![tokens(2, 3, 4, 0.2)];
        inputs.extend(params.iter().map(|p| p.value().detach()));
        let valid = [1.0, 1.0, 1.0, 1.0, 0.0, 1.0];
        let err = grad_check(
            |v| {
                let mut ctx = ForwardCtx::training();
                ctx.override_params(&params, &v[1..]);
                Ok(a.attend(&ctx, &v[0], Some(&valid))?.0)
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "rel err {err}");
    }
}
