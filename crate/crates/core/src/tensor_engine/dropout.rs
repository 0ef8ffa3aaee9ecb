use rand::Rng;

use super::norm::Mode;
use super::rng::EngineRng;
use super::tensor::Tensor;
use crate::error::{invalid, Result};

/// Inverted dropout. Train mode with `p > 0` draws one uniform per entry in
/// row-major order; the returned mask holds `0` or `1/(1-p)` per entry.
/// Eval mode and `p == 0` draw nothing and return the input unchanged.
pub fn dropout(x: &Tensor, p: f64, mode: Mode, rng: &mut EngineRng) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(invalid!("dropout probability must be in [0,1), got {p}"));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let out = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((Tensor::new(x.shape(), out)?, Some(mask)))
}

pub fn dropout_backward(grad_out: &Tensor, mask: Option<&[f64]>) -> Tensor {
    match mask {
        None => grad_out.clone(),
        Some(m) => Tensor::new(
            grad_out.shape(),
            grad_out.data().iter().zip(m).map(|(g, k)| g * k).collect(),
        )
        .expect("mask matches"),
    }
}
