//! Stride-1 valid cross-correlation over channels-last grids, via patch matrices.

use super::gemm::{gemm, Op};
use super::tensor::{grid_dims, grid_shape, Tensor};
use crate::error::{shape_err, Result};

/// Reads a `[K,K,Cin,Cout]` kernel as `(K, Cin, Cout)`.
pub fn kernel_dims(kernel: &Tensor) -> Result<(usize, usize, usize)> {
    match *kernel.shape() {
        [k, k2, cin, cout] if k == k2 => Ok((k, cin, cout)),
        ref s => Err(shape_err!("kernel must be [K,K,Cin,Cout], got {s:?}")),
    }
}

/// Patch matrix of a padded grid: one row per output cell `(n,i,j)`, one column per
/// `(ki,kj,c)` in row-major order, so it multiplies a `[K·K·Cin, Cout]` kernel directly.
pub fn im2col(padded: &Tensor, k: usize) -> Result<(Vec<f64>, usize, usize, usize)> {
    let (n, hp, pp, c) = grid_dims(padded)?;
    if k == 0 || hp < k || pp < k {
        return Err(shape_err!("padded grid {hp}x{pp} is smaller than kernel {k}"));
    }
    let (ho, po) = (hp - k + 1, pp - k + 1);
    let width = k * k * c;
    let src = padded.data();
    let mut cols = Vec::with_capacity(n * ho * po * width);
    for b in 0..n {
        for i in 0..ho {
            for j in 0..po {
                for ki in 0..k {
                    let at = ((b * hp + i + ki) * pp + j) * c;
                    cols.extend_from_slice(&src[at..at + k * c]);
                }
            }
        }
    }
    Ok((cols, n, ho, po))
}

/// Adjoint of [`im2col`]: scatter-adds patch-matrix gradients into a padded grid.
pub fn col2im(cols: &[f64], n: usize, hp: usize, pp: usize, c: usize, k: usize) -> Vec<f64> {
    let (ho, po) = (hp - k + 1, pp - k + 1);
    let width = k * k * c;
    debug_assert_eq!(cols.len(), n * ho * po * width);
    let mut out = vec![0.0; n * hp * pp * c];
    let mut row = 0;
    for b in 0..n {
        for i in 0..ho {
            for j in 0..po {
                let patch = &cols[row * width..(row + 1) * width];
                for ki in 0..k {
                    let at = ((b * hp + i + ki) * pp + j) * c;
                    let seg = &patch[ki * k * c..(ki + 1) * k * c];
                    for (o, g) in out[at..at + k * c].iter_mut().zip(seg) {
                        *o += g;
                    }
                }
                row += 1;
            }
        }
    }
    out
}

/// Valid stride-1 cross-correlation of a padded grid with a `[K,K,Cin,Cout]` kernel (no flip).
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (k, cin, cout) = kernel_dims(kernel)?;
    let (_, _, _, c) = grid_dims(input)?;
    if c != cin {
        return Err(shape_err!("input has {c} channels, kernel expects {cin}"));
    }
    if bias.len() != cout {
        return Err(shape_err!("bias has {} entries, kernel has {cout} outputs", bias.len()));
    }
    let (cols, n, ho, po) = im2col(input, k)?;
    let rows = n * ho * po;
    let mut out = Vec::with_capacity(rows * cout);
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    gemm(
        rows,
        k * k * cin,
        cout,
        &cols,
        Op::N,
        kernel.data(),
        Op::N,
        1.0,
        &mut out,
    );
    Tensor::new(&grid_shape(input, n, ho, po, cout), out)
}

/// Gradients of `sum(grad_out ⊙ conv2d(input, kernel, bias))`.
pub fn conv2d_backward(grad_out: &Tensor, input: &Tensor, kernel: &Tensor) -> Result<(Tensor, Tensor, Vec<f64>)> {
    let (k, cin, cout) = kernel_dims(kernel)?;
    let (n, hp, pp, c) = grid_dims(input)?;
    if c != cin {
        return Err(shape_err!("input has {c} channels, kernel expects {cin}"));
    }
    let (gn, gh, gp, gc) = grid_dims(grad_out)?;
    if hp < k || pp < k || (gn, gh, gp, gc) != (n, hp - k + 1, pp - k + 1, cout) {
        return Err(shape_err!(
            "grad_out {:?} does not match forward output of input {:?} and kernel {:?}",
            grad_out.shape(),
            input.shape(),
            kernel.shape()
        ));
    }
    let (cols, _, ho, po) = im2col(input, k)?;
    let rows = n * ho * po;
    let width = k * k * cin;
    let g = grad_out.data();

    let mut grad_kernel = vec![0.0; width * cout];
    gemm(width, rows, cout, &cols, Op::T, g, Op::N, 0.0, &mut grad_kernel);

    let mut grad_bias = vec![0.0; cout];
    for r in g.chunks_exact(cout) {
        for (b, v) in grad_bias.iter_mut().zip(r) {
            *b += v;
        }
    }

    let mut grad_cols = vec![0.0; rows * width];
    gemm(rows, cout, width, g, Op::N, kernel.data(), Op::T, 0.0, &mut grad_cols);
    let grad_input = col2im(&grad_cols, n, hp, pp, cin, k);

    Ok((
        Tensor::new(input.shape(), grad_input)?,
        Tensor::new(kernel.shape(), grad_kernel)?,
        grad_bias,
    ))
}
