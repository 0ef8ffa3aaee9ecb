use serde::{Deserialize, Serialize};

use super::param::Parameter;
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step on `param` using `grad`.
pub fn adam_update(param: &mut Parameter, grad: &[f64], hyper: &AdamHyper) -> Result<()> {
    if grad.len() != param.len() {
        return Err(shape_err!(
            "gradient has {} entries, parameter has {}",
            grad.len(),
            param.len()
        ));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i} is {}", grad[i])));
    }
    param.step_count += 1;
    let t = param.step_count as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    let Parameter {
        value, adam_m, adam_v, ..
    } = param;
    for (((w, m), v), &g) in value
        .data_mut()
        .iter_mut()
        .zip(adam_m.iter_mut())
        .zip(adam_v.iter_mut())
        .zip(grad)
    {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    Ok(())
}

impl Parameter {
    /// Adam step with the accumulated gradient.
    pub fn apply_adam(&mut self, hyper: &AdamHyper) -> Result<()> {
        let grad = std::mem::take(&mut self.grad);
        let out = adam_update(self, &grad, hyper);
        self.grad = grad;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_engine::Tensor;

    fn scalar(v: f64) -> Parameter {
        Parameter::new(Tensor::new(&[1], vec![v]).unwrap())
    }

    #[test]
    fn zero_grad_leaves_fresh_parameter_unchanged() {
        let mut p = scalar(2.5);
        adam_update(&mut p, &[0.0], &AdamHyper::default()).unwrap();
        assert_eq!(p.data(), &[2.5]);
        assert_eq!(p.adam_m, vec![0.0]);
        assert_eq!(p.adam_v, vec![0.0]);
        assert_eq!(p.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let hyper = AdamHyper {
            lr: 0.01,
            ..Default::default()
        };
        for g in [3.0, -0.2] {
            let mut p = scalar(1.0);
            adam_update(&mut p, &[g], &hyper).unwrap();
            let delta = p.data()[0] - 1.0;
            assert!((delta + 0.01 * f64::signum(g)).abs() < 1e-8, "{delta}");
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let hyper = AdamHyper {
            lr: 0.1,
            ..Default::default()
        };
        let mut p = scalar(0.0);
        for _ in 0..500 {
            let w = p.data()[0];
            adam_update(&mut p, &[2.0 * (w - 3.0)], &hyper).unwrap();
        }
        assert!((p.data()[0] - 3.0).abs() <= 1e-2, "{}", p.data()[0]);
    }

    #[test]
    fn rejects_non_finite_and_mismatched_grads() {
        let mut p = scalar(0.0);
        assert!(adam_update(&mut p, &[f64::NAN], &AdamHyper::default()).is_err());
        assert!(adam_update(&mut p, &[1.0, 2.0], &AdamHyper::default()).is_err());
        assert_eq!(p.step_count, 0);
    }
}
