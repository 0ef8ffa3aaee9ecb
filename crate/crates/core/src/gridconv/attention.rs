use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::sgt::GridSpec;
use crate::tensor_engine::{
    activation, activation_backward, affine, affine_backward, batch_norm, batch_norm_backward, global_average_pool,
    global_average_pool_backward, grid_dims, Activation, BatchNormCache, EngineRng, Mode, Parameter, RunningStats,
    Tensor,
};

/// Hidden width of the attention bottleneck.
pub const ATTENTION_HIDDEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnSettings {
    pub momentum: f64,
    pub eps: f64,
}

impl Default for BnSettings {
    fn default() -> Self {
        Self {
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

/// Batch norm parameters plus running statistics over `features` channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormLayer {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub stats: RunningStats,
    pub settings: BnSettings,
}

impl BatchNormLayer {
    pub fn new(features: usize, settings: BnSettings) -> Self {
        Self {
            gamma: Parameter::new(Tensor::full(&[features], 1.0)),
            beta: Parameter::new(Tensor::zeros(&[features])),
            stats: RunningStats::new(features),
            settings,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes the last axis of `x` over all leading axes.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, BatchNormCache)> {
        let f = self.features();
        let shape = x.shape().to_vec();
        if shape.last() != Some(&f) {
            return Err(shape_err!("batch norm over {f} features got {shape:?}"));
        }
        let flat = x.clone().reshape(&[x.len() / f, f])?;
        let (y, cache) = batch_norm(
            &flat,
            self.gamma.data(),
            self.beta.data(),
            &mut self.stats,
            mode,
            self.settings.momentum,
            self.settings.eps,
        )?;
        Ok((y.reshape(&shape)?, cache))
    }

    pub fn backward(&mut self, cache: &BatchNormCache, grad_out: &Tensor) -> Result<Tensor> {
        let f = self.features();
        let shape = grad_out.shape().to_vec();
        let flat = grad_out.clone().reshape(&[grad_out.len() / f, f])?;
        let (gx, gg, gb) = batch_norm_backward(cache, self.gamma.data(), &flat)?;
        self.gamma.accumulate_grad(&gg);
        self.beta.accumulate_grad(&gb);
        gx.reshape(&shape)
    }
}

pub(crate) fn uniform_tensor(shape: &[usize], bound: f64, rng: &mut EngineRng) -> Tensor {
    Tensor::from_fn(shape, |_| crate::tensor_engine::rng::uniform(rng, -bound, bound))
}

/// Squeeze-excitation style predictor of per-cell kernel scalings:
/// pool, batch norm, ReLU, `C→16` affine, ReLU, `16→H·P·K·K` affine, sigmoid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionHead {
    pub bn: BatchNormLayer,
    pub fc1_weight: Parameter,
    pub fc1_bias: Parameter,
    pub fc2_weight: Parameter,
    pub fc2_bias: Parameter,
    pub grid: GridSpec,
    pub kernel: usize,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    h: usize,
    p: usize,
    bn: BatchNormCache,
    normed: Tensor,
    hidden_in: Tensor,
    pre_hidden: Tensor,
    hidden: Tensor,
    logits: Tensor,
    alpha: Tensor,
}

impl AttentionCache {
    pub fn alpha(&self) -> &Tensor {
        &self.alpha
    }
}

impl AttentionHead {
    /// Weights and biases drawn from `U(±1/sqrt(fan_in))`: fc1 weight, fc1 bias, fc2 weight, fc2 bias.
    pub fn new(in_channels: usize, grid: GridSpec, kernel: usize, bn: BnSettings, rng: &mut EngineRng) -> Self {
        let out = grid.cells() * kernel * kernel;
        let b1 = 1.0 / (in_channels as f64).sqrt();
        let b2 = 1.0 / (ATTENTION_HIDDEN as f64).sqrt();
        let fc1_weight = Parameter::new(uniform_tensor(&[in_channels, ATTENTION_HIDDEN], b1, rng));
        let fc1_bias = Parameter::new(uniform_tensor(&[ATTENTION_HIDDEN], b1, rng));
        let fc2_weight = Parameter::new(uniform_tensor(&[ATTENTION_HIDDEN, out], b2, rng));
        let fc2_bias = Parameter::new(uniform_tensor(&[out], b2, rng));
        Self {
            bn: BatchNormLayer::new(in_channels, bn),
            fc1_weight,
            fc1_bias,
            fc2_weight,
            fc2_bias,
            grid,
            kernel,
        }
    }

    pub fn param_count(in_channels: usize, grid: GridSpec, kernel: usize) -> usize {
        let out = grid.cells() * kernel * kernel;
        2 * in_channels + in_channels * ATTENTION_HIDDEN + ATTENTION_HIDDEN + ATTENTION_HIDDEN * out + out
    }

    /// Returns `α` as `[N,H,P,K,K]`, every entry in (0,1).
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, AttentionCache)> {
        let (n, h, p, _) = grid_dims(x)?;
        if (h, p) != (self.grid.rows, self.grid.cols) {
            return Err(shape_err!("attention head built for {} got a {h}x{p} grid", self.grid));
        }
        let pooled = global_average_pool(&x.clone().reshape(&[n, h, p, x.shape()[x.rank() - 1]])?)?;
        let (normed, bn) = self.bn.forward(&pooled, mode)?;
        let hidden_in = activation(&normed, Activation::Relu);
        let pre_hidden = affine(&hidden_in, &self.fc1_weight.value, self.fc1_bias.data())?;
        let hidden = activation(&pre_hidden, Activation::Relu);
        let logits = affine(&hidden, &self.fc2_weight.value, self.fc2_bias.data())?;
        let alpha = activation(&logits, Activation::Sigmoid).reshape(&[n, h, p, self.kernel, self.kernel])?;
        let cache = AttentionCache {
            h,
            p,
            bn,
            normed,
            hidden_in,
            pre_hidden,
            hidden,
            logits,
            alpha: alpha.clone(),
        };
        Ok((alpha, cache))
    }

    /// Accumulates parameter gradients; returns the gradient with respect to the input grid.
    pub fn backward(&mut self, cache: &AttentionCache, grad_alpha: &Tensor) -> Result<Tensor> {
        let n = cache.logits.shape()[0];
        let out = cache.logits.shape()[1];
        if grad_alpha.len() != n * out {
            return Err(shape_err!("alpha gradient {:?} vs {n}x{out}", grad_alpha.shape()));
        }
        let g_alpha = grad_alpha.clone().reshape(&[n, out])?;
        let alpha_flat = cache.alpha.clone().reshape(&[n, out])?;
        let g_logits = activation_backward(Activation::Sigmoid, &cache.logits, &alpha_flat, &g_alpha)?;
        let (g_hidden, g_w2, g_b2) = affine_backward(&g_logits, &cache.hidden, &self.fc2_weight.value)?;
        self.fc2_weight.accumulate_grad(g_w2.data());
        self.fc2_bias.accumulate_grad(&g_b2);
        let g_pre = activation_backward(Activation::Relu, &cache.pre_hidden, &cache.hidden, &g_hidden)?;
        let (g_in, g_w1, g_b1) = affine_backward(&g_pre, &cache.hidden_in, &self.fc1_weight.value)?;
        self.fc1_weight.accumulate_grad(g_w1.data());
        self.fc1_bias.accumulate_grad(&g_b1);
        let g_normed = activation_backward(Activation::Relu, &cache.normed, &cache.hidden_in, &g_in)?;
        let g_pooled = self.bn.backward(&cache.bn, &g_normed)?;
        global_average_pool_backward(&g_pooled, cache.h, cache.p)
    }

    pub fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        out.push((format!("{prefix}.bn.gamma"), &self.bn.gamma));
        out.push((format!("{prefix}.bn.beta"), &self.bn.beta));
        out.push((format!("{prefix}.fc1.weight"), &self.fc1_weight));
        out.push((format!("{prefix}.fc1.bias"), &self.fc1_bias));
        out.push((format!("{prefix}.fc2.weight"), &self.fc2_weight));
        out.push((format!("{prefix}.fc2.bias"), &self.fc2_bias));
    }

    pub fn named_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Parameter)>) {
        out.push((format!("{prefix}.bn.gamma"), &mut self.bn.gamma));
        out.push((format!("{prefix}.bn.beta"), &mut self.bn.beta));
        out.push((format!("{prefix}.fc1.weight"), &mut self.fc1_weight));
        out.push((format!("{prefix}.fc1.bias"), &mut self.fc1_bias));
        out.push((format!("{prefix}.fc2.weight"), &mut self.fc2_weight));
        out.push((format!("{prefix}.fc2.bias"), &mut self.fc2_bias));
    }
}
