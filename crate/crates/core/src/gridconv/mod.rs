//! Grid convolution: two-branch (circular + replicate padded) convolution over grid
//! poses, and its dynamic form whose kernels are rescaled per cell by an attention head.

mod attention;
mod layer;

pub use attention::{AttentionCache, AttentionHead, BatchNormLayer, BnSettings, ATTENTION_HIDDEN};
pub use layer::{BranchParams, DGridConvLayer, LayerCache, LayerConfig};

use crate::error::{invalid, shape_err, Result};
use crate::tensor_engine::{grid_dims, Mode, Tensor};

/// Vanilla two-branch grid convolution.
pub fn gridconv_forward(layer: &DGridConvLayer, input: &Tensor) -> Result<Tensor> {
    if layer.config.dynamic {
        return Err(invalid!("gridconv_forward needs a layer built with dynamic=false"));
    }
    Ok(layer.forward_with_alpha(input, None)?.0)
}

/// Per-cell kernel scalings `[N,H,P,K,K]` predicted by `head`.
pub fn attention_forward(head: &mut AttentionHead, input: &Tensor, mode: Mode) -> Result<Tensor> {
    Ok(head.forward(input, mode)?.0)
}

/// Dynamic grid convolution: attention, then per-cell scaled kernels on both branches.
pub fn dgridconv_forward(layer: &mut DGridConvLayer, input: &Tensor, mode: Mode) -> Result<(Tensor, LayerCache)> {
    if !layer.config.dynamic {
        return Err(invalid!("dgridconv_forward needs a layer built with dynamic=true"));
    }
    layer.forward(input, mode)
}

/// Accumulates gradients for kernels, biases and attention parameters; returns `dL/dinput`.
pub fn dgridconv_backward(layer: &mut DGridConvLayer, cache: &LayerCache, grad_out: &Tensor) -> Result<Tensor> {
    layer.backward(cache, grad_out)
}

/// The `K×K×C` window of a padded `[H+K-1, P+K-1, C]` grid centered over unpadded cell `(i,j)`.
pub fn extract_patch(padded: &Tensor, i: usize, j: usize, k: usize) -> Result<Tensor> {
    let (n, hp, pp, c) = grid_dims(padded)?;
    if n != 1 {
        return Err(shape_err!("extract_patch takes a single grid, got batch of {n}"));
    }
    if k == 0 || k % 2 == 0 || hp < k || pp < k {
        return Err(invalid!("kernel {k} does not fit a padded {hp}x{pp} grid"));
    }
    let (h, p) = (hp - k + 1, pp - k + 1);
    if i >= h || j >= p {
        return Err(invalid!("cell ({i},{j}) is outside the {h}x{p} grid"));
    }
    let mut out = Vec::with_capacity(k * k * c);
    for ki in 0..k {
        let at = ((i + ki) * pp + j) * c;
        out.extend_from_slice(&padded.data()[at..at + k * c]);
    }
    Tensor::new(&[k, k, c], out)
}
