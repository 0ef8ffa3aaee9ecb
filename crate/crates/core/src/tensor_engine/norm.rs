use serde::{Deserialize, Serialize};

use super::tensor::{matrix_dims, Tensor};
use crate::error::{invalid, shape_err, Result};

/// Train or eval behavior for stochastic and batch-statistic ops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Running mean and (unbiased) variance per feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(features: usize) -> Self {
        Self {
            mean: vec![0.0; features],
            var: vec![1.0; features],
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    rows: usize,
    mode: Mode,
}

/// Per-feature normalization of an `N×F` matrix followed by `gamma · x̂ + beta`.
///
/// Train mode normalizes with the biased batch variance and folds the unbiased
/// one into `stats` with weight `momentum`.
pub fn batch_norm(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    stats: &mut RunningStats,
    mode: Mode,
    momentum: f64,
    eps: f64,
) -> Result<(Tensor, BatchNormCache)> {
    let (rows, f) = matrix_dims(x, "batch_norm input")?;
    if gamma.len() != f || beta.len() != f || stats.mean.len() != f || stats.var.len() != f {
        return Err(shape_err!("batch_norm parameters do not have {f} features"));
    }
    if eps <= 0.0 {
        return Err(invalid!("batch_norm eps must be positive, got {eps}"));
    }
    let data = x.data();
    let (mean, var) = match mode {
        Mode::Train => {
            if rows < 2 {
                return Err(invalid!("batch_norm in train mode needs at least 2 rows, got {rows}"));
            }
            let mut mean = vec![0.0; f];
            for r in data.chunks_exact(f) {
                for (m, v) in mean.iter_mut().zip(r) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows as f64);
            let mut var = vec![0.0; f];
            for r in data.chunks_exact(f) {
                for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= rows as f64);
            let unbias = rows as f64 / (rows as f64 - 1.0);
            for j in 0..f {
                stats.mean[j] = (1.0 - momentum) * stats.mean[j] + momentum * mean[j];
                stats.var[j] = (1.0 - momentum) * stats.var[j] + momentum * var[j] * unbias;
            }
            (mean, var)
        }
        Mode::Eval => (stats.mean.clone(), stats.var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = Vec::with_capacity(data.len());
    let mut out = Vec::with_capacity(data.len());
    for r in data.chunks_exact(f) {
        for j in 0..f {
            let z = (r[j] - mean[j]) * inv_std[j];
            xhat.push(z);
            out.push(gamma[j] * z + beta[j]);
        }
    }
    Ok((
        Tensor::new(&[rows, f], out)?,
        BatchNormCache {
            xhat,
            inv_std,
            rows,
            mode,
        },
    ))
}

/// Returns `(grad_x, grad_gamma, grad_beta)`.
pub fn batch_norm_backward(
    cache: &BatchNormCache,
    gamma: &[f64],
    grad_out: &Tensor,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let f = gamma.len();
    let (rows, gf) = matrix_dims(grad_out, "batch_norm grad")?;
    if rows != cache.rows || gf != f {
        return Err(shape_err!(
            "batch_norm grad is {rows}x{gf}, forward was {}x{f}",
            cache.rows
        ));
    }
    let g = grad_out.data();
    let mut ggamma = vec![0.0; f];
    let mut gbeta = vec![0.0; f];
    for (gr, xr) in g.chunks_exact(f).zip(cache.xhat.chunks_exact(f)) {
        for j in 0..f {
            gbeta[j] += gr[j];
            ggamma[j] += gr[j] * xr[j];
        }
    }
    let mut gx = Vec::with_capacity(g.len());
    match cache.mode {
        Mode::Train => {
            let n = rows as f64;
            for (gr, xr) in g.chunks_exact(f).zip(cache.xhat.chunks_exact(f)) {
                for j in 0..f {
                    let scale = gamma[j] * cache.inv_std[j] / n;
                    gx.push(scale * (n * gr[j] - gbeta[j] - xr[j] * ggamma[j]));
                }
            }
        }
        Mode::Eval => {
            for gr in g.chunks_exact(f) {
                for j in 0..f {
                    gx.push(gr[j] * gamma[j] * cache.inv_std[j]);
                }
            }
        }
    }
    Ok((Tensor::new(&[rows, f], gx)?, ggamma, gbeta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standardized_batch_passes_through() {
        // columns with mean 0 and biased variance 1
        let x = Tensor::new(&[2, 2], vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let mut st = RunningStats::new(2);
        let (y, _) = batch_norm(&x, &[1.0; 2], &[0.0; 2], &mut st, Mode::Train, 0.1, 1e-5).unwrap();
        let scale = 1.0 / (1.0f64 + 1e-5).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * scale).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_batch_gives_beta() {
        let x = Tensor::full(&[4, 3], 2.7);
        let mut st = RunningStats::new(3);
        let beta = [0.5, -1.0, 3.0];
        let (y, _) = batch_norm(&x, &[1.0; 3], &beta, &mut st, Mode::Train, 0.1, 1e-5).unwrap();
        for r in y.data().chunks(3) {
            for (a, b) in r.iter().zip(&beta) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_batch_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, f) = (64, 5);
        let x = Tensor::from_fn(&[n, f], |i| rng.random_range(-10.0..30.0) * (1 + i % f) as f64);
        let mut st = RunningStats::new(f);
        let (y, _) = batch_norm(&x, &[1.0; 5], &[0.0; 5], &mut st, Mode::Train, 0.1, 1e-5).unwrap();
        for j in 0..f {
            let col: Vec<f64> = (0..n).map(|i| y.data()[i * f + j]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() <= 1e-10);
            assert!((var - 1.0).abs() <= 1e-6, "{var}");
        }
    }

    #[test]
    fn single_row_train_is_rejected_but_eval_works() {
        let x = Tensor::zeros(&[1, 2]);
        let mut st = RunningStats::new(2);
        assert!(batch_norm(&x, &[1.0; 2], &[0.0; 2], &mut st, Mode::Train, 0.1, 1e-5).is_err());
        assert!(batch_norm(&x, &[1.0; 2], &[0.0; 2], &mut st, Mode::Eval, 0.1, 1e-5).is_ok());
    }

    #[test]
    fn running_stats_track_with_momentum() {
        let x = Tensor::new(&[2, 1], vec![1.0, 3.0]).unwrap();
        let mut st = RunningStats::new(1);
        batch_norm(&x, &[1.0], &[0.0], &mut st, Mode::Train, 0.1, 1e-5).unwrap();
        assert!((st.mean[0] - 0.2).abs() < 1e-15);
        // unbiased variance 2
        assert!((st.var[0] - (0.9 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, f) = (6, 3);
        let x = Tensor::from_fn(&[n, f], |_| rng.random_range(-2.0..2.0));
        let gamma: Vec<f64> = (0..f).map(|_| rng.random_range(0.5..1.5)).collect();
        let beta: Vec<f64> = (0..f).map(|_| rng.random_range(-0.5..0.5)).collect();
        let g = Tensor::from_fn(&[n, f], |_| rng.random_range(-1.0..1.0));
        for mode in [Mode::Train, Mode::Eval] {
            let mut base = RunningStats::new(f);
            base.mean = vec![0.3, -0.1, 0.2];
            base.var = vec![1.5, 0.7, 2.0];
            let loss = |x: &Tensor, gm: &[f64], bt: &[f64]| {
                let mut st = base.clone();
                let (y, _) = batch_norm(x, gm, bt, &mut st, mode, 0.1, 1e-5).unwrap();
                y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum::<f64>()
            };
            let mut st = base.clone();
            let (_, cache) = batch_norm(&x, &gamma, &beta, &mut st, mode, 0.1, 1e-5).unwrap();
            let (gx, gg, gb) = batch_norm_backward(&cache, &gamma, &g).unwrap();
            let h = 1e-5;
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
            for i in 0..x.len() {
                let (mut p, mut m) = (x.clone(), x.clone());
                p.data_mut()[i] += h;
                m.data_mut()[i] -= h;
                let num = (loss(&p, &gamma, &beta) - loss(&m, &gamma, &beta)) / (2.0 * h);
                assert!(
                    rel(gx.data()[i], num) < 1e-6,
                    "{mode:?} x{i}: {} vs {num}",
                    gx.data()[i]
                );
            }
            for j in 0..f {
                let (mut p, mut m) = (gamma.clone(), gamma.clone());
                p[j] += h;
                m[j] -= h;
                let num = (loss(&x, &p, &beta) - loss(&x, &m, &beta)) / (2.0 * h);
                assert!(rel(gg[j], num) < 1e-6);
                let (mut p, mut m) = (beta.clone(), beta.clone());
                p[j] += h;
                m[j] -= h;
                let num = (loss(&x, &gamma, &p) - loss(&x, &gamma, &m)) / (2.0 * h);
                assert!(rel(gb[j], num) < 1e-6);
            }
        }
    }
}
