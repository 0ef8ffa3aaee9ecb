use serde::{Deserialize, Serialize};

use super::tensor::{grid_dims, grid_shape, Tensor};
use crate::error::{invalid, shape_err, Result};

/// Border fill rule for grid padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    /// Wrap around: padded index `a` reads source `(a - s) mod len`.
    Circular,
    /// Edge copy: padded index `a` reads source `clamp(a - s, 0, len - 1)`.
    Replicate,
}

impl std::fmt::Display for PadMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PadMode::Circular => f.write_str("circular"),
            PadMode::Replicate => f.write_str("replicate"),
        }
    }
}

/// Source index along one axis for every padded position.
pub fn pad_index_map(len: usize, s: usize, mode: PadMode) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(invalid!("cannot pad an empty axis"));
    }
    if mode == PadMode::Circular && s >= len {
        return Err(invalid!(
            "circular padding of size {s} on an axis of length {len} wraps more than once"
        ));
    }
    Ok((0..len + 2 * s)
        .map(|a| {
            let shifted = a as isize - s as isize;
            match mode {
                PadMode::Circular => shifted.rem_euclid(len as isize) as usize,
                PadMode::Replicate => shifted.clamp(0, len as isize - 1) as usize,
            }
        })
        .collect())
}

/// Pads both spatial axes of an `[N,H,P,C]` (or `[H,P,C]`) grid by `s` cells per side.
pub fn pad_grid(input: &Tensor, s: usize, mode: PadMode) -> Result<Tensor> {
    let (n, h, p, c) = grid_dims(input)?;
    let rows = pad_index_map(h, s, mode)?;
    let cols = pad_index_map(p, s, mode)?;
    let (hp, pp) = (rows.len(), cols.len());
    let src = input.data();
    let mut out = Vec::with_capacity(n * hp * pp * c);
    for b in 0..n {
        let base = b * h * p * c;
        for &r in &rows {
            for &q in &cols {
                let at = base + (r * p + q) * c;
                out.extend_from_slice(&src[at..at + c]);
            }
        }
    }
    Tensor::new(&grid_shape(input, n, hp, pp, c), out)
}

/// Adjoint of [`pad_grid`]: folds the gradient of every padded cell back onto its source cell.
pub fn pad_grid_backward(grad_padded: &Tensor, h: usize, p: usize, s: usize, mode: PadMode) -> Result<Tensor> {
    let (n, hp, pp, c) = grid_dims(grad_padded)?;
    if hp != h + 2 * s || pp != p + 2 * s {
        return Err(shape_err!(
            "padded gradient {hp}x{pp} does not match {h}x{p} with pad {s}"
        ));
    }
    let rows = pad_index_map(h, s, mode)?;
    let cols = pad_index_map(p, s, mode)?;
    let g = grad_padded.data();
    let mut out = vec![0.0; n * h * p * c];
    for b in 0..n {
        for (a, &r) in rows.iter().enumerate() {
            for (bq, &q) in cols.iter().enumerate() {
                let from = ((b * hp + a) * pp + bq) * c;
                let to = ((b * h + r) * p + q) * c;
                for ch in 0..c {
                    out[to + ch] += g[from + ch];
                }
            }
        }
    }
    Tensor::new(&grid_shape(grad_padded, n, h, p, c), out)
}
