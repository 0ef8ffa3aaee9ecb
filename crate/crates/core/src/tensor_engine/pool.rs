use super::tensor::{grid_dims, Tensor};
use crate::error::{shape_err, Result};

/// Mean over all spatial cells: `[N,H,P,C]` to `[N,C]` (`[H,P,C]` to `[C]`).
pub fn global_average_pool(grid: &Tensor) -> Result<Tensor> {
    let (n, h, p, c) = grid_dims(grid)?;
    let cells = h * p;
    let mut out = vec![0.0; n * c];
    for (b, sample) in grid.data().chunks_exact(cells * c).enumerate() {
        let acc = &mut out[b * c..(b + 1) * c];
        for cell in sample.chunks_exact(c) {
            for (a, v) in acc.iter_mut().zip(cell) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= cells as f64);
    }
    let shape = if grid.rank() == 3 { vec![c] } else { vec![n, c] };
    Tensor::new(&shape, out)
}

pub fn global_average_pool_backward(grad_out: &Tensor, h: usize, p: usize) -> Result<Tensor> {
    let (n, c) = match *grad_out.shape() {
        [n, c] => (n, c),
        [c] => (1, c),
        ref s => return Err(shape_err!("pool grad must be [N,C], got {s:?}")),
    };
    let scale = 1.0 / (h * p) as f64;
    let mut out = Vec::with_capacity(n * h * p * c);
    for row in grad_out.data().chunks_exact(c) {
        for _ in 0..h * p {
            out.extend(row.iter().map(|g| g * scale));
        }
    }
    let shape = if grad_out.rank() == 1 {
        vec![h, p, c]
    } else {
        vec![n, h, p, c]
    };
    Tensor::new(&shape, out)
}
