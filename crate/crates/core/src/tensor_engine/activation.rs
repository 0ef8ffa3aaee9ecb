use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

// Largest f64 below 1; keeps sigmoid inside the open interval when it saturates.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

fn sigmoid(v: f64) -> f64 {
    let s = if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP)
}

pub fn activation(x: &Tensor, kind: Activation) -> Tensor {
    let f: fn(f64) -> f64 = match kind {
        Activation::Relu => |v| v.max(0.0),
        Activation::Sigmoid => sigmoid,
    };
    Tensor::new(x.shape(), x.data().iter().map(|&v| f(v)).collect()).expect("same shape")
}

/// Gradient with respect to the input, given the forward input `x` and output `y`.
pub fn activation_backward(kind: Activation, x: &Tensor, y: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if x.shape() != grad_out.shape() || y.shape() != grad_out.shape() {
        return Err(shape_err!(
            "activation grad {:?} vs input {:?}",
            grad_out.shape(),
            x.shape()
        ));
    }
    let g = grad_out.data();
    let data = match kind {
        Activation::Relu => x
            .data()
            .iter()
            .zip(g)
            .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
            .collect(),
        Activation::Sigmoid => y.data().iter().zip(g).map(|(&s, &gv)| gv * s * (1.0 - s)).collect(),
    };
    Tensor::new(x.shape(), data)
}
