//! Window and grid token partitions of channels-last feature maps.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionKind {
    /// Contiguous `P×P` windows.
    Window,
    /// Dilated `G×G` grids; each group spans the whole map.
    Grid,
}

fn dims(x: &Tensor, size: usize, op: &'static str) -> Result<(usize, usize, usize, usize)> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::shape(op, format!("expected NHWC, got {s:?}")));
    }
    if size == 0 || s[1] % size != 0 || s[2] % size != 0 {
        return Err(Error::shape(op, format!("{}x{} not divisible by {size}", s[1], s[2])));
    }
    Ok((s[0], s[1], s[2], s[3]))
}

/// `[N,H,W,C]` → `[N·(H/P)·(W/P), P·P, C]`, windows in row-major order.
pub fn window_partition(x: &Tensor, p: usize) -> Result<Tensor> {
    let (n, h, w, c) = dims(x, p, "window_partition")?;
    x.reshape(&[n, h / p, p, w / p, p, c])?
        .permute(&[0, 1, 3, 2, 4, 5])?
        .reshape(&[n * (h / p) * (w / p), p * p, c])
}

pub fn window_reverse(tokens: &Tensor, p: usize, n: usize, h: usize, w: usize) -> Result<Tensor> {
    let c = check_tokens(tokens, p, n, h, w, "window_reverse")?;
    tokens
        .reshape(&[n, h / p, w / p, p, p, c])?
        .permute(&[0, 1, 3, 2, 4, 5])?
        .reshape(&[n, h, w, c])
}

/// `[N,H,W,C]` → `[N·(H/G)·(W/G), G·G, C]`: group `(i, j)` holds pixels
/// `(i + a·H/G, j + b·W/G)` for `a, b < G`.
pub fn grid_partition(x: &Tensor, g: usize) -> Result<Tensor> {
    let (n, h, w, c) = dims(x, g, "grid_partition")?;
    x.reshape(&[n, g, h / g, g, w / g, c])?
        .permute(&[0, 2, 4, 1, 3, 5])?
        .reshape(&[n * (h / g) * (w / g), g * g, c])
}

pub fn grid_reverse(tokens: &Tensor, g: usize, n: usize, h: usize, w: usize) -> Result<Tensor> {
    let c = check_tokens(tokens, g, n, h, w, "grid_reverse")?;
    tokens
        .reshape(&[n, h / g, w / g, g, g, c])?
        .permute(&[0, 3, 1, 4, 2, 5])?
        .reshape(&[n, h, w, c])
}

fn check_tokens(t: &Tensor, size: usize, n: usize, h: usize, w: usize, op: &'static str) -> Result<usize> {
    let s = t.shape();
    if size == 0 || h % size != 0 || w % size != 0 {
        return Err(Error::shape(op, format!("{h}x{w} not divisible by {size}")));
    }
    if s.len() != 3 || s[0] != n * (h / size) * (w / size) || s[1] != size * size {
        return Err(Error::shape(op, format!("tokens {s:?} do not match {n}x{h}x{w} with size {size}")));
    }
    Ok(s[2])
}

pub fn partition(kind: PartitionKind, x: &Tensor, size: usize) -> Result<Tensor> {
    match kind {
        PartitionKind::Window => window_partition(x, size),
        PartitionKind::Grid => grid_partition(x, size),
    }
}

pub fn reverse(kind: PartitionKind, tokens: &Tensor, size: usize, n: usize, h: usize, w: usize) -> Result<Tensor> {
    match kind {
        PartitionKind::Window => window_reverse(tokens, size, n, h, w),
        PartitionKind::Grid => grid_reverse(tokens, size, n, h, w),
    }
}

/// Flat pixel index `y·W + x` of every token, `[groups][tokens]`, for one
/// image of extent `h × w`.
pub fn index_map(kind: PartitionKind, h: usize, w: usize, size: usize) -> Result<Vec<Vec<usize>>> {
    let idx = Tensor::new(&[1, h, w, 1], (0..h * w).map(|i| i as f64).collect())?;
    let t = partition(kind, &idx, size)?;
    let tokens = t.shape()[1];
    Ok(t.data()
        .chunks(tokens)
        .map(|g| g.iter().map(|&v| v as usize).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_index_map() {
        let m = index_map(PartitionKind::Window, 4, 4, 2).unwrap();
        assert_eq!(m.len(), 4);
        // (0,0),(0,1),(1,0),(1,1)
        assert_eq!(m[0], vec![0, 1, 4, 5]);
        assert_eq!(m[3], vec![10, 11, 14, 15]);
    }

    #[test]
    fn grid_index_map() {
        let m = index_map(PartitionKind::Grid, 4, 4, 2).unwrap();
        // (0,0),(0,2),(2,0),(2,2)
        assert_eq!(m[0], vec![0, 2, 8, 10]);
        assert_eq!(m[1], vec![1, 3, 9, 11]);
    }

    #[test]
    fn single_window_is_row_major() {
        let m = index_map(PartitionKind::Window, 3, 3, 3).unwrap();
        assert_eq!(m, vec![(0..9).collect::<Vec<_>>()]);
        assert_eq!(index_map(PartitionKind::Grid, 3, 3, 3).unwrap(), m);
    }

    #[test]
    fn roundtrips() {
        let (n, h, w, c) = (2, 4, 6, 3);
        let x = Tensor::new(&[n, h, w, c], (0..n * h * w * c).map(|v| (v as f64).sin()).collect()).unwrap();
        for kind in [PartitionKind::Window, PartitionKind::Grid] {
            let t = partition(kind, &x, 2).unwrap();
            assert_eq!(t.shape(), &[n * 6, 4, c]);
            assert_eq!(reverse(kind, &t, 2, n, h, w).unwrap().data(), x.data());
        }
    }

    #[test]
    fn non_divisible_rejected() {
        let x = Tensor::zeros(&[1, 5, 4, 1]);
        assert!(window_partition(&x, 2).is_err());
        assert!(grid_partition(&x, 2).is_err());
    }
}
