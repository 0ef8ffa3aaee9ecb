use super::gemm::{gemm, Op};
use super::tensor::{matrix_dims, Tensor};
use crate::error::{shape_err, Result};

/// `x · weight + bias` for `x: N×Fin`, `weight: Fin×Fout`.
pub fn affine(x: &Tensor, weight: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (n, fin) = matrix_dims(x, "affine input")?;
    let (win, fout) = matrix_dims(weight, "affine weight")?;
    if win != fin || bias.len() != fout {
        return Err(shape_err!(
            "affine: input {n}x{fin}, weight {win}x{fout}, bias {}",
            bias.len()
        ));
    }
    let mut out = Vec::with_capacity(n * fout);
    for _ in 0..n {
        out.extend_from_slice(bias);
    }
    gemm(n, fin, fout, x.data(), Op::N, weight.data(), Op::N, 1.0, &mut out);
    Tensor::new(&[n, fout], out)
}

/// Returns `(grad_x, grad_weight, grad_bias)`.
pub fn affine_backward(grad_out: &Tensor, x: &Tensor, weight: &Tensor) -> Result<(Tensor, Tensor, Vec<f64>)> {
    let (n, fin) = matrix_dims(x, "affine input")?;
    let (_, fout) = matrix_dims(weight, "affine weight")?;
    if grad_out.shape() != [n, fout] {
        return Err(shape_err!("affine grad {:?}, expected [{n}, {fout}]", grad_out.shape()));
    }
    let g = grad_out.data();
    let mut gx = vec![0.0; n * fin];
    gemm(n, fout, fin, g, Op::N, weight.data(), Op::T, 0.0, &mut gx);
    let mut gw = vec![0.0; fin * fout];
    gemm(fin, n, fout, x.data(), Op::T, g, Op::N, 0.0, &mut gw);
    let mut gb = vec![0.0; fout];
    for r in g.chunks_exact(fout) {
        for (b, v) in gb.iter_mut().zip(r) {
            *b += v;
        }
    }
    Ok((Tensor::new(&[n, fin], gx)?, Tensor::new(&[fin, fout], gw)?, gb))
}
