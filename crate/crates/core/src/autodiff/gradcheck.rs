//! Central finite-difference checking of reverse-mode gradients.

use super::tensor::Tensor;
use crate::error::Result;

/// Default perturbation for double precision.
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
    /// `‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖)`, 0 when both vanish.
    pub rel_err: f64,
}

/// Fixed, non-uniform projection weights so every output entry is checked.
fn projection(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 + ((i as f64 + 1.0) * 0.618_033_988_75).fract()).collect()
}

fn project(out: &Tensor) -> Result<Tensor> {
    let w = Tensor::new(out.shape(), projection(out.numel()))?;
    out.mul(&w)?.sum()
}

/// Compare the gradient of `f` at `inputs` against central differences
/// `(f(x+h) − f(x−h)) / 2h`, one coordinate at a time.
///
/// `f` may return any shape; it is reduced to a scalar with fixed weights.
pub fn grad_check_report<F>(f: F, inputs: &[Tensor], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|t| Tensor::leaf(t.shape(), t.to_vec()))
        .collect::<Result<_>>()?;
    let loss = project(&f(&leaves)?)?;
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = leaves.iter().map(|l| l.grad()).collect();

    let base: Vec<Tensor> = inputs.iter().map(|t| t.detach()).collect();
    let eval = |idx: usize, coord: usize, delta: f64| -> Result<f64> {
        let mut args = base.clone();
        let mut d = args[idx].to_vec();
        d[coord] += delta;
        args[idx] = Tensor::new(args[idx].shape(), d)?;
        Ok(project(&f(&args)?)?.item())
    };
    let mut numeric = Vec::with_capacity(inputs.len());
    for (idx, t) in inputs.iter().enumerate() {
        let mut g = vec![0.0; t.numel()];
        for (coord, gv) in g.iter_mut().enumerate() {
            *gv = (eval(idx, coord, h)? - eval(idx, coord, -h)?) / (2.0 * h);
        }
        numeric.push(g);
    }

    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for (a, n) in analytic.iter().flatten().zip(numeric.iter().flatten()) {
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
    }
    let denom = na.sqrt() + nn.sqrt();
    let rel_err = if denom == 0.0 { 0.0 } else { diff.sqrt() / denom };
    Ok(GradCheckReport {
        analytic,
        numeric,
        rel_err,
    })
}

/// Relative error of reverse-mode gradients against finite differences.
pub fn grad_check<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    Ok(grad_check_report(f, inputs, h)?.rel_err)
}

/// Identity in the forward pass whose backward pass scales the gradient by
/// `factor`. Used as a negative control for [`grad_check`].
pub fn identity_with_scaled_vjp(x: &Tensor, factor: f64) -> Result<Tensor> {
    Tensor::from_op(
        "scaled_vjp",
        x.shape().to_vec(),
        x.to_vec(),
        &[x],
        Box::new(move |g, _, _| vec![Some(g.iter().map(|v| v * factor).collect())]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_is_exact() {
        let a = Tensor::new(&[2, 3], vec![0.3, -1.0, 2.0, 0.5, 0.1, -0.7]).unwrap();
        let x = Tensor::new(&[3, 2], vec![1.0, 2.0, -3.0, 0.5, 0.25, 4.0]).unwrap();
        let err = grad_check(|v| v[0].matmul(&a), &[x], DEFAULT_STEP).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn sigmoid_chain() {
        let x = Tensor::new(&[4], vec![0.3, -1.2, 2.0, 0.0]).unwrap();
        let err = grad_check(|v| v[0].sigmoid()?.mul_scalar(3.0)?.sigmoid(), &[x], DEFAULT_STEP).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn corrupted_vjp_is_caught() {
        let x = Tensor::new(&[4], vec![0.3, -1.2, 2.0, 0.0]).unwrap();
        let err = grad_check(|v| identity_with_scaled_vjp(&v[0].sigmoid()?, 1.1), &[x], DEFAULT_STEP).unwrap();
        assert!(err > 1e-2, "{err}");
    }
}
