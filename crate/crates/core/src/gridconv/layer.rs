use serde::{Deserialize, Serialize};

use super::attention::{uniform_tensor, AttentionCache, AttentionHead, BnSettings};
use crate::error::{invalid, shape_err, Result};
use crate::sgt::GridSpec;
use crate::tensor_engine::gemm::{gemm, Op};
use crate::tensor_engine::{
    col2im, grid_dims, im2col, pad_grid, pad_grid_backward, EngineRng, Mode, PadMode, Parameter, RunningStats, Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub grid: GridSpec,
    pub dynamic: bool,
}

impl LayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 {
            return Err(invalid!("kernel size must be odd, got {}", self.kernel));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(invalid!("channel counts must be positive"));
        }
        let pad = self.pad();
        if pad >= self.grid.rows || pad >= self.grid.cols {
            return Err(invalid!(
                "kernel {} needs circular padding {pad}, too large for a {} grid",
                self.kernel,
                self.grid
            ));
        }
        Ok(())
    }

    pub fn pad(&self) -> usize {
        (self.kernel - 1) / 2
    }

    pub fn taps(&self) -> usize {
        self.kernel * self.kernel
    }
}

/// One padded convolution branch: `[K,K,Cin,Cout]` kernel, bias, and its border rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchParams {
    pub kernel: Parameter,
    pub bias: Parameter,
    pub pad_mode: PadMode,
}

impl BranchParams {
    /// Kernel then bias, both `U(±sqrt(1/(K·K·Cin)))`.
    fn new(cfg: &LayerConfig, pad_mode: PadMode, rng: &mut EngineRng) -> Self {
        let bound = (1.0 / (cfg.taps() * cfg.in_channels) as f64).sqrt();
        let kernel = uniform_tensor(&[cfg.kernel, cfg.kernel, cfg.in_channels, cfg.out_channels], bound, rng);
        let bias = uniform_tensor(&[cfg.out_channels], bound, rng);
        Self {
            kernel: Parameter::new(kernel),
            bias: Parameter::new(bias),
            pad_mode,
        }
    }
}

/// Grid convolution layer: a circular-padded and a replicate-padded branch whose
/// outputs are summed. In dynamic mode an attention head predicts one `K×K`
/// scaling per grid cell, applied to both branches' kernels on that cell's patch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DGridConvLayer {
    pub config: LayerConfig,
    pub branch_circular: BranchParams,
    pub branch_replicate: BranchParams,
    pub attention: Option<AttentionHead>,
}

#[derive(Clone, Debug)]
pub struct LayerCache {
    n: usize,
    padded_circular: Tensor,
    padded_replicate: Tensor,
    alpha: Option<Tensor>,
    attention: Option<AttentionCache>,
}

impl LayerCache {
    pub fn alpha(&self) -> Option<&Tensor> {
        self.alpha.as_ref()
    }
}

impl DGridConvLayer {
    /// Draw order: circular branch, replicate branch, then the attention head.
    pub fn new(config: LayerConfig, bn: BnSettings, rng: &mut EngineRng) -> Result<Self> {
        config.validate()?;
        let branch_circular = BranchParams::new(&config, PadMode::Circular, rng);
        let branch_replicate = BranchParams::new(&config, PadMode::Replicate, rng);
        let attention = config
            .dynamic
            .then(|| AttentionHead::new(config.in_channels, config.grid, config.kernel, bn, rng));
        Ok(Self {
            config,
            branch_circular,
            branch_replicate,
            attention,
        })
    }

    pub fn param_count(config: &LayerConfig) -> usize {
        let conv = 2 * (config.taps() * config.in_channels * config.out_channels + config.out_channels);
        let att = if config.dynamic {
            AttentionHead::param_count(config.in_channels, config.grid, config.kernel)
        } else {
            0
        };
        conv + att
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let (n, h, p, c) = grid_dims(x)?;
        let cfg = &self.config;
        if x.rank() != 4 || (h, p, c) != (cfg.grid.rows, cfg.grid.cols, cfg.in_channels) {
            return Err(shape_err!(
                "layer expects [N,{},{},{}], got {:?}",
                cfg.grid.rows,
                cfg.grid.cols,
                cfg.in_channels,
                x.shape()
            ));
        }
        Ok(n)
    }

    /// Forward pass; in dynamic mode the scalings come from the attention head.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, LayerCache)> {
        self.check_input(x)?;
        let (alpha, att_cache) = match self.attention.as_mut() {
            Some(head) => {
                let (a, c) = head.forward(x, mode)?;
                (Some(a), Some(c))
            }
            None => (None, None),
        };
        let (out, mut cache) = self.forward_with_alpha(x, alpha.as_ref())?;
        cache.attention = att_cache;
        Ok((out, cache))
    }

    /// Forward pass with explicit per-cell scalings `[N,H,P,K,K]` (or none).
    pub fn forward_with_alpha(&self, x: &Tensor, alpha: Option<&Tensor>) -> Result<(Tensor, LayerCache)> {
        let n = self.check_input(x)?;
        let cfg = &self.config;
        if let Some(a) = alpha {
            if a.shape() != [n, cfg.grid.rows, cfg.grid.cols, cfg.kernel, cfg.kernel] {
                return Err(shape_err!("alpha {:?} does not match layer", a.shape()));
            }
        }
        let a = alpha.map(Tensor::data);
        let (mut out, padded_circular) = branch_forward(&self.branch_circular, cfg, x, a)?;
        let (out_r, padded_replicate) = branch_forward(&self.branch_replicate, cfg, x, a)?;
        for (o, v) in out.iter_mut().zip(&out_r) {
            *o += v;
        }
        let out = Tensor::new(&[n, cfg.grid.rows, cfg.grid.cols, cfg.out_channels], out)?;
        Ok((
            out,
            LayerCache {
                n,
                padded_circular,
                padded_replicate,
                alpha: alpha.cloned(),
                attention: None,
            },
        ))
    }

    /// Accumulates all parameter gradients; returns `dL/dx`.
    pub fn backward(&mut self, cache: &LayerCache, grad_out: &Tensor) -> Result<Tensor> {
        let cfg = self.config;
        if grad_out.shape() != [cache.n, cfg.grid.rows, cfg.grid.cols, cfg.out_channels] {
            return Err(shape_err!(
                "grad_out {:?} does not match layer output",
                grad_out.shape()
            ));
        }
        let alpha = cache.alpha.as_ref().map(Tensor::data);
        let mut grad_alpha = alpha.map(|a| vec![0.0; a.len()]);
        let mut gx = branch_backward(
            &mut self.branch_circular,
            &cfg,
            &cache.padded_circular,
            alpha,
            grad_out,
            grad_alpha.as_deref_mut(),
        )?;
        let gx_r = branch_backward(
            &mut self.branch_replicate,
            &cfg,
            &cache.padded_replicate,
            alpha,
            grad_out,
            grad_alpha.as_deref_mut(),
        )?;
        for (a, b) in gx.data_mut().iter_mut().zip(gx_r.data()) {
            *a += b;
        }
        if let (Some(head), Some(att), Some(ga)) = (self.attention.as_mut(), cache.attention.as_ref(), grad_alpha) {
            let ga = Tensor::new(att.alpha().shape(), ga)?;
            let g_att = head.backward(att, &ga)?;
            for (a, b) in gx.data_mut().iter_mut().zip(g_att.data()) {
                *a += b;
            }
        }
        Ok(gx)
    }

    pub fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        out.push((format!("{prefix}.circular.kernel"), &self.branch_circular.kernel));
        out.push((format!("{prefix}.circular.bias"), &self.branch_circular.bias));
        out.push((format!("{prefix}.replicate.kernel"), &self.branch_replicate.kernel));
        out.push((format!("{prefix}.replicate.bias"), &self.branch_replicate.bias));
        if let Some(head) = &self.attention {
            head.named_params(&format!("{prefix}.attention"), out);
        }
    }

    pub fn named_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Parameter)>) {
        out.push((format!("{prefix}.circular.kernel"), &mut self.branch_circular.kernel));
        out.push((format!("{prefix}.circular.bias"), &mut self.branch_circular.bias));
        out.push((format!("{prefix}.replicate.kernel"), &mut self.branch_replicate.kernel));
        out.push((format!("{prefix}.replicate.bias"), &mut self.branch_replicate.bias));
        if let Some(head) = &mut self.attention {
            head.named_params_mut(&format!("{prefix}.attention"), out);
        }
    }

    pub fn named_stats_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut RunningStats)>) {
        if let Some(head) = &mut self.attention {
            out.push((format!("{prefix}.attention.bn"), &mut head.bn.stats));
        }
    }
}

/// Returns the flat `[N·H·P, Cout]` output and the padded input.
fn branch_forward(
    br: &BranchParams,
    cfg: &LayerConfig,
    x: &Tensor,
    alpha: Option<&[f64]>,
) -> Result<(Vec<f64>, Tensor)> {
    let padded = pad_grid(x, cfg.pad(), br.pad_mode)?;
    let (mut cols, n, h, p) = im2col(&padded, cfg.kernel)?;
    let rows = n * h * p;
    let (cin, cout) = (cfg.in_channels, cfg.out_channels);
    if let Some(a) = alpha {
        scale_patches(&mut cols, a, cfg.taps(), cin);
    }
    let mut out = Vec::with_capacity(rows * cout);
    for _ in 0..rows {
        out.extend_from_slice(br.bias.data());
    }
    gemm(
        rows,
        cfg.taps() * cin,
        cout,
        &cols,
        Op::N,
        br.kernel.data(),
        Op::N,
        1.0,
        &mut out,
    );
    Ok((out, padded))
}

/// Multiplies tap `t` of patch row `m` by `alpha[m·taps + t]` across all input channels.
fn scale_patches(cols: &mut [f64], alpha: &[f64], taps: usize, cin: usize) {
    for (row, a) in cols.chunks_exact_mut(taps * cin).zip(alpha.chunks_exact(taps)) {
        for (tap, &s) in row.chunks_exact_mut(cin).zip(a) {
            tap.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn branch_backward(
    br: &mut BranchParams,
    cfg: &LayerConfig,
    padded: &Tensor,
    alpha: Option<&[f64]>,
    grad_out: &Tensor,
    grad_alpha: Option<&mut [f64]>,
) -> Result<Tensor> {
    let (cols, n, h, p) = im2col(padded, cfg.kernel)?;
    let rows = n * h * p;
    let (cin, cout, taps) = (cfg.in_channels, cfg.out_channels, cfg.taps());
    let width = taps * cin;
    let g = grad_out.data();

    let mut grad_bias = vec![0.0; cout];
    for r in g.chunks_exact(cout) {
        for (b, v) in grad_bias.iter_mut().zip(r) {
            *b += v;
        }
    }
    br.bias.accumulate_grad(&grad_bias);

    // d(scaled patches) = grad_out · Wᵀ
    let mut grad_cols = vec![0.0; rows * width];
    gemm(
        rows,
        cout,
        width,
        g,
        Op::N,
        br.kernel.data(),
        Op::T,
        0.0,
        &mut grad_cols,
    );

    let mut grad_kernel = vec![0.0; width * cout];
    match alpha {
        Some(a) => {
            let mut scaled = cols.clone();
            scale_patches(&mut scaled, a, taps, cin);
            gemm(width, rows, cout, &scaled, Op::T, g, Op::N, 0.0, &mut grad_kernel);
            if let Some(ga) = grad_alpha {
                for ((gc_row, c_row), ga_row) in grad_cols
                    .chunks_exact(width)
                    .zip(cols.chunks_exact(width))
                    .zip(ga.chunks_exact_mut(taps))
                {
                    for ((gt, ct), gav) in gc_row.chunks_exact(cin).zip(c_row.chunks_exact(cin)).zip(ga_row) {
                        *gav += gt.iter().zip(ct).map(|(u, v)| u * v).sum::<f64>();
                    }
                }
            }
            scale_patches(&mut grad_cols, a, taps, cin);
        }
        None => gemm(width, rows, cout, &cols, Op::T, g, Op::N, 0.0, &mut grad_kernel),
    }
    br.kernel.accumulate_grad(&grad_kernel);

    let (_, hp, pp, _) = grid_dims(padded)?;
    let grad_padded = Tensor::new(padded.shape(), col2im(&grad_cols, n, hp, pp, cin, cfg.kernel))?;
    pad_grid_backward(&grad_padded, h, p, cfg.pad(), br.pad_mode)
}
