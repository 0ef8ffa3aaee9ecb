//! Forward (`D = S·G`) and inverse (replica-mean) grid transformations.

use super::assignment::AssignmentMatrix;
use crate::error::{shape_err, Error, Result};
use crate::tensor_engine::Tensor;

fn pose_dims(g: &Tensor) -> Result<(usize, usize, usize)> {
    match *g.shape() {
        [n, j, c] => Ok((n, j, c)),
        [j, c] => Ok((1, j, c)),
        ref s => Err(shape_err!("pose must be [J,C] or [N,J,C], got {s:?}")),
    }
}

fn grid_pose_dims(s: &AssignmentMatrix, d: &Tensor) -> Result<(usize, usize)> {
    let grid = s.grid();
    match *d.shape() {
        [n, h, p, c] if h == grid.rows && p == grid.cols => Ok((n, c)),
        [h, p, c] if h == grid.rows && p == grid.cols => Ok((1, c)),
        ref sh => Err(shape_err!("grid pose {sh:?} does not match a {grid} assignment")),
    }
}

/// Places a copy of joint `j`'s features in every cell assigned to `j`.
pub fn sgt_forward(s: &AssignmentMatrix, g: &Tensor) -> Result<Tensor> {
    let (n, j, c) = pose_dims(g)?;
    if j != s.joints() {
        return Err(shape_err!("pose has {j} joints, assignment has {}", s.joints()));
    }
    let cell_joints = s.cell_joints()?;
    let cells = s.cells();
    let src = g.data();
    let mut out = Vec::with_capacity(n * cells * c);
    for b in 0..n {
        for &jj in &cell_joints {
            let at = (b * j + jj) * c;
            out.extend_from_slice(&src[at..at + c]);
        }
    }
    let grid = s.grid();
    let shape = if g.rank() == 2 {
        vec![grid.rows, grid.cols, c]
    } else {
        vec![n, grid.rows, grid.cols, c]
    };
    Tensor::new(&shape, out)
}

fn require_covering(s: &AssignmentMatrix) -> Result<Vec<usize>> {
    let coverage = s.coverage();
    let missing: Vec<usize> = (0..coverage.len()).filter(|&j| coverage[j] == 0).collect();
    if missing.is_empty() {
        Ok(coverage)
    } else {
        Err(Error::Uncovered { missing, coverage })
    }
}

/// Mean of every cell assigned to each joint (`(Sᵀ normalized by column sums) · D`).
///
/// Accumulated as a running mean, so identical replicas return their value bit-exactly.
pub fn sgt_inverse(s: &AssignmentMatrix, d: &Tensor) -> Result<Tensor> {
    let (n, c) = grid_pose_dims(s, d)?;
    require_covering(s)?;
    let (cells, j) = (s.cells(), s.joints());
    let src = d.data();
    let mut out = vec![0.0; n * j * c];
    let mut seen = vec![0usize; j];
    for b in 0..n {
        seen.iter_mut().for_each(|k| *k = 0);
        for p in 0..cells {
            let cell = &src[(b * cells + p) * c..(b * cells + p + 1) * c];
            for jj in 0..j {
                if s.get(p, jj) {
                    seen[jj] += 1;
                    let k = seen[jj] as f64;
                    for (o, v) in out[(b * j + jj) * c..(b * j + jj + 1) * c].iter_mut().zip(cell) {
                        *o += (v - *o) / k;
                    }
                }
            }
        }
    }
    let shape = if d.rank() == 3 { vec![j, c] } else { vec![n, j, c] };
    Tensor::new(&shape, out)
}

/// Gradient of the loss with respect to every entry of `S` through `D = S·G`,
/// given `dL/dD` (`[N,H,P,C]`) and the pose `G` (`[N,J,C]`). Row-major `HP×J`.
pub fn sgt_forward_assignment_grad(grad_grid: &Tensor, g: &Tensor, s: &AssignmentMatrix) -> Result<Vec<f64>> {
    let (n, c) = grid_pose_dims(s, grad_grid)?;
    let (gn, j, gc) = pose_dims(g)?;
    if gn != n || gc != c || j != s.joints() {
        return Err(shape_err!(
            "pose {:?} does not match grid grad {:?}",
            g.shape(),
            grad_grid.shape()
        ));
    }
    let cells = s.cells();
    let (gd, gg) = (grad_grid.data(), g.data());
    let mut out = vec![0.0; cells * j];
    for b in 0..n {
        for p in 0..cells {
            let dcell = &gd[(b * cells + p) * c..(b * cells + p + 1) * c];
            for jj in 0..j {
                let joint = &gg[(b * j + jj) * c..(b * j + jj + 1) * c];
                out[p * j + jj] += dcell.iter().zip(joint).map(|(x, y)| x * y).sum::<f64>();
            }
        }
    }
    Ok(out)
}

/// Backward of [`sgt_inverse`]: returns `dL/dD` and `dL/dS` (row-major `HP×J`) given the
/// forward input `d`, its output `pose`, and `dL/dpose`.
///
/// With `n_j` cells on joint `j`, `∂pose_j/∂S[p,j] = (D_p − pose_j) / n_j`.
pub fn sgt_inverse_backward(
    s: &AssignmentMatrix,
    d: &Tensor,
    pose: &Tensor,
    grad_pose: &Tensor,
) -> Result<(Tensor, Vec<f64>)> {
    let (n, c) = grid_pose_dims(s, d)?;
    let coverage = require_covering(s)?;
    let (cells, j) = (s.cells(), s.joints());
    if pose.len() != n * j * c || grad_pose.len() != n * j * c {
        return Err(shape_err!(
            "pose gradient {:?} does not match {n}x{j}x{c}",
            grad_pose.shape()
        ));
    }
    let (dd, pp, gp) = (d.data(), pose.data(), grad_pose.data());
    let mut grad_d = vec![0.0; n * cells * c];
    let mut grad_s = vec![0.0; cells * j];
    for b in 0..n {
        for p in 0..cells {
            let cell = &dd[(b * cells + p) * c..(b * cells + p + 1) * c];
            for jj in 0..j {
                let w = 1.0 / coverage[jj] as f64;
                let g = &gp[(b * j + jj) * c..(b * j + jj + 1) * c];
                let m = &pp[(b * j + jj) * c..(b * j + jj + 1) * c];
                if s.get(p, jj) {
                    for (o, gv) in grad_d[(b * cells + p) * c..(b * cells + p + 1) * c].iter_mut().zip(g) {
                        *o += w * gv;
                    }
                }
                let dot: f64 = (0..c).map(|k| g[k] * (cell[k] - m[k])).sum();
                grad_s[p * j + jj] += w * dot;
            }
        }
    }
    Ok((Tensor::new(d.shape(), grad_d)?, grad_s))
}
