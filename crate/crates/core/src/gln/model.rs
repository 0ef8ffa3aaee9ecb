use serde::{Deserialize, Serialize};

use super::config::{GlnConfig, SgtMode};
use crate::error::{shape_err, Error, Result};
use crate::gridconv::{AttentionHead, BatchNormLayer, DGridConvLayer, LayerCache, LayerConfig};
use crate::sgt::{
    build_handcrafted_layout, init_autogrids, parse_layout, random_sgt, sgt_forward, sgt_forward_assignment_grad,
    sgt_inverse, sgt_inverse_backward, AssignmentMatrix, AutoGridsState, SkeletonTopology,
};
use crate::tensor_engine::rng::seeded;
use crate::tensor_engine::{
    activation, activation_backward, dropout, dropout_backward, Activation, BatchNormCache, EngineRng, Mode, Parameter,
    RunningStats, Tensor,
};

/// Coordinate channels of the 2D input and 3D output.
pub const INPUT_CHANNELS: usize = 2;
pub const OUTPUT_CHANNELS: usize = 3;

/// Convolution followed, unless it is the output layer, by batch norm, ReLU and dropout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLayer {
    pub conv: DGridConvLayer,
    pub bn: Option<BatchNormLayer>,
}

#[derive(Clone, Debug)]
pub struct GridLayerCache {
    conv: LayerCache,
    post: Option<PostCache>,
}

#[derive(Clone, Debug)]
struct PostCache {
    bn: BatchNormCache,
    normed: Tensor,
    activated: Tensor,
    mask: Option<Vec<f64>>,
}

impl GridLayer {
    fn new(config: LayerConfig, with_post: bool, cfg: &GlnConfig, rng: &mut EngineRng) -> Result<Self> {
        Ok(Self {
            conv: DGridConvLayer::new(config, cfg.batch_norm, rng)?,
            bn: with_post.then(|| BatchNormLayer::new(config.out_channels, cfg.batch_norm)),
        })
    }

    /// Dropout draws one uniform per output entry, in train mode only.
    pub fn forward(
        &mut self,
        x: &Tensor,
        mode: Mode,
        dropout_p: f64,
        rng: &mut EngineRng,
    ) -> Result<(Tensor, GridLayerCache)> {
        let (y, conv) = self.conv.forward(x, mode)?;
        let Some(bn) = self.bn.as_mut() else {
            return Ok((y, GridLayerCache { conv, post: None }));
        };
        let (normed, bn_cache) = bn.forward(&y, mode)?;
        let activated = activation(&normed, Activation::Relu);
        let (out, mask) = dropout(&activated, dropout_p, mode, rng)?;
        let post = PostCache {
            bn: bn_cache,
            normed,
            activated,
            mask,
        };
        Ok((out, GridLayerCache { conv, post: Some(post) }))
    }

    pub fn backward(&mut self, cache: &GridLayerCache, grad: &Tensor) -> Result<Tensor> {
        let grad_conv = match (self.bn.as_mut(), cache.post.as_ref()) {
            (Some(bn), Some(post)) => {
                let g = dropout_backward(grad, post.mask.as_deref());
                let g = activation_backward(Activation::Relu, &post.normed, &post.activated, &g)?;
                bn.backward(&post.bn, &g)?
            }
            _ => grad.clone(),
        };
        self.conv.backward(&cache.conv, &grad_conv)
    }

    fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        self.conv.named_params(prefix, out);
        if let Some(bn) = &self.bn {
            out.push((format!("{prefix}.bn.gamma"), &bn.gamma));
            out.push((format!("{prefix}.bn.beta"), &bn.beta));
        }
    }

    fn named_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Parameter)>) {
        self.conv.named_params_mut(prefix, out);
        if let Some(bn) = &mut self.bn {
            out.push((format!("{prefix}.bn.gamma"), &mut bn.gamma));
            out.push((format!("{prefix}.bn.beta"), &mut bn.beta));
        }
    }

    fn named_stats_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut RunningStats)>) {
        self.conv.named_stats_mut(prefix, out);
        if let Some(bn) = &mut self.bn {
            out.push((format!("{prefix}.bn"), &mut bn.stats));
        }
    }
}

/// Two grid layers with an identity skip added after the second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlock {
    pub first: GridLayer,
    pub second: GridLayer,
}

/// The joint-to-cell assignment a model uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SgtState {
    Fixed(AssignmentMatrix),
    Learnable(AutoGridsState),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlnModel {
    pub config: GlnConfig,
    pub topology: SkeletonTopology,
    pub expand: GridLayer,
    pub blocks: Vec<ResidualBlock>,
    pub shrink: GridLayer,
    pub sgt: SgtState,
}

#[derive(Clone, Debug)]
pub struct GlnCache {
    input: Tensor,
    s_forward: AssignmentMatrix,
    s_inverse: AssignmentMatrix,
    expand: GridLayerCache,
    blocks: Vec<(GridLayerCache, GridLayerCache)>,
    shrink: GridLayerCache,
    grid_output: Tensor,
    pose: Tensor,
}

impl GlnCache {
    /// Assignment used to place joints on the grid in this pass.
    pub fn forward_assignment(&self) -> &AssignmentMatrix {
        &self.s_forward
    }

    /// Assignment used to read joints back, with uncovered joints patched in.
    pub fn inverse_assignment(&self) -> &AssignmentMatrix {
        &self.s_inverse
    }
}

/// Parameter totals by group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBreakdown {
    pub convolution: usize,
    pub batch_norm: usize,
    pub attention: usize,
    pub assignment: usize,
    pub total: usize,
}

fn layer_configs(cfg: &GlnConfig) -> Vec<LayerConfig> {
    let plan = cfg.kernels();
    let make = |kernel, cin, cout| LayerConfig {
        kernel,
        in_channels: cin,
        out_channels: cout,
        grid: cfg.grid,
        dynamic: cfg.dynamic,
    };
    let l = cfg.latent_channels;
    let mut out = vec![make(plan.expand(), INPUT_CHANNELS, l)];
    for b in 0..cfg.blocks {
        let (k1, k2) = plan.block(b);
        out.push(make(k1, l, l));
        out.push(make(k2, l, l));
    }
    out.push(make(plan.shrink(), l, OUTPUT_CHANNELS));
    out
}

/// Closed-form parameter count of the network `cfg` describes for `joints` joints.
pub fn param_breakdown(cfg: &GlnConfig, joints: usize) -> ParamBreakdown {
    let layers = layer_configs(cfg);
    let convolution = layers
        .iter()
        .map(|c| 2 * (c.kernel * c.kernel * c.in_channels * c.out_channels + c.out_channels))
        .sum();
    let batch_norm = (layers.len() - 1) * 2 * cfg.latent_channels;
    let attention = if cfg.dynamic {
        layers
            .iter()
            .map(|c| AttentionHead::param_count(c.in_channels, c.grid, c.kernel))
            .sum()
    } else {
        0
    };
    let assignment = if cfg.sgt_mode == SgtMode::Learnable {
        cfg.grid.cells() * joints
    } else {
        0
    };
    ParamBreakdown {
        convolution,
        batch_norm,
        attention,
        assignment,
        total: convolution + batch_norm + attention + assignment,
    }
}

fn fixed_assignment(
    cfg: &GlnConfig,
    topology: &SkeletonTopology,
    rng: &mut EngineRng,
) -> Result<Option<AssignmentMatrix>> {
    let j = topology.num_joints();
    let s = match cfg.sgt_mode {
        SgtMode::Handcrafted => build_handcrafted_layout(topology, cfg.grid)?,
        SgtMode::Random => random_sgt(j, cfg.grid, rng)?,
        SgtMode::File => load_layout_file(cfg, topology)?,
        SgtMode::Learnable => return Ok(None),
    };
    Ok(Some(s))
}

fn load_layout_file(cfg: &GlnConfig, topology: &SkeletonTopology) -> Result<AssignmentMatrix> {
    let path = cfg
        .layout_file
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("layout_file is not set".into()))?;
    let s = parse_layout(&std::fs::read_to_string(path)?, topology, Some(cfg.grid))?;
    if !s.rows_one_hot() {
        return Err(Error::InvalidArgument(format!(
            "layout {} has cells without exactly one joint",
            path.display()
        )));
    }
    if !s.is_covering() {
        let coverage = s.coverage();
        let missing = (0..coverage.len()).filter(|&j| coverage[j] == 0).collect();
        return Err(Error::Uncovered { missing, coverage });
    }
    Ok(s)
}

/// Seed for the learnable scores: the layout file when given, else the handcrafted
/// layout when one exists for this skeleton and grid, else none.
fn learnable_seed(cfg: &GlnConfig, topology: &SkeletonTopology) -> Result<Option<AssignmentMatrix>> {
    if cfg.layout_file.is_some() {
        return load_layout_file(cfg, topology).map(Some);
    }
    Ok(build_handcrafted_layout(topology, cfg.grid).ok())
}

impl GlnModel {
    /// Initializes from `config.seed`. Draw order: the random assignment (random mode),
    /// then layers front to back, then the learnable scores.
    pub fn build(config: &GlnConfig, topology: &SkeletonTopology) -> Result<Self> {
        config.validate()?;
        config.grid.check_fits(topology.num_joints())?;
        let mut rng = seeded(config.seed);
        let fixed = fixed_assignment(config, topology, &mut rng)?;
        let mut model = Self::build_layers(config, topology, &mut rng)?;
        model.sgt = match fixed {
            Some(s) => SgtState::Fixed(s),
            None => {
                let seed = learnable_seed(config, topology)?;
                SgtState::Learnable(init_autogrids(
                    seed.as_ref(),
                    config.grid,
                    topology.num_joints(),
                    &mut rng,
                )?)
            }
        };
        Ok(model)
    }

    /// Layers only, with a placeholder assignment.
    pub(crate) fn build_layers(config: &GlnConfig, topology: &SkeletonTopology, rng: &mut EngineRng) -> Result<Self> {
        let layers = layer_configs(config);
        let last = layers.len() - 1;
        let mut built = layers
            .iter()
            .enumerate()
            .map(|(i, c)| GridLayer::new(*c, i != last, config, rng))
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        let expand = built.next().expect("expand layer");
        let blocks = (0..config.blocks)
            .map(|_| ResidualBlock {
                first: built.next().expect("block layer"),
                second: built.next().expect("block layer"),
            })
            .collect();
        let shrink = built.next().expect("shrink layer");
        Ok(Self {
            config: config.clone(),
            topology: topology.clone(),
            expand,
            blocks,
            shrink,
            sgt: SgtState::Fixed(AssignmentMatrix::zeros(config.grid, topology.num_joints())),
        })
    }

    pub fn joints(&self) -> usize {
        self.topology.num_joints()
    }

    pub fn param_breakdown(&self) -> ParamBreakdown {
        param_breakdown(&self.config, self.joints())
    }

    /// Counts the tensors actually held; equals [`param_breakdown`]'s total.
    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn check_topology(&self, topology: &SkeletonTopology) -> Result<()> {
        if topology.num_joints() != self.joints() {
            return Err(Error::Incompatible(format!(
                "model has {} joints, data has {}",
                self.joints(),
                topology.num_joints()
            )));
        }
        if topology.joint_names() != self.topology.joint_names() {
            return Err(Error::Incompatible("joint names differ between model and data".into()));
        }
        Ok(())
    }

    /// Noise-free assignment the model currently uses.
    pub fn current_assignment(&self) -> AssignmentMatrix {
        match &self.sgt {
            SgtState::Fixed(s) => s.clone(),
            SgtState::Learnable(st) => st.argmax_assignment(),
        }
    }

    /// Forward and inverse assignments for one pass. Learnable mode draws `HP·J` Gumbel
    /// values when training with noise active.
    fn assignments(&self, mode: Mode, epoch: usize, rng: &mut EngineRng) -> (AssignmentMatrix, AssignmentMatrix) {
        match &self.sgt {
            SgtState::Fixed(s) => (s.clone(), s.clone()),
            SgtState::Learnable(st) => {
                let s = match mode {
                    Mode::Train => crate::sgt::autogrids_sample(st, rng, epoch).1,
                    Mode::Eval => st.argmax_assignment(),
                };
                let (inv, _) = st.patch_uncovered(&s);
                (s, inv)
            }
        }
    }

    /// `[N,J,2]` normalized 2D poses to `[N,J,3]` predictions.
    pub fn forward(
        &mut self,
        g2d: &Tensor,
        mode: Mode,
        epoch: usize,
        rng: &mut EngineRng,
    ) -> Result<(Tensor, GlnCache)> {
        match *g2d.shape() {
            [_, j, INPUT_CHANNELS] if j == self.joints() => {}
            ref s => {
                return Err(shape_err!(
                    "expected [N,{},{INPUT_CHANNELS}] input, got {s:?}",
                    self.joints()
                ))
            }
        }
        g2d.ensure_finite("2D input")?;
        let (s_forward, s_inverse) = self.assignments(mode, epoch, rng);
        let p = self.config.dropout_p;
        let grid_input = sgt_forward(&s_forward, g2d)?;
        let (mut x, expand) = self.expand.forward(&grid_input, mode, p, rng)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let (h, c1) = block.first.forward(&x, mode, p, rng)?;
            let (mut h, c2) = block.second.forward(&h, mode, p, rng)?;
            for (a, b) in h.data_mut().iter_mut().zip(x.data()) {
                *a += b;
            }
            x = h;
            blocks.push((c1, c2));
        }
        let (grid_output, shrink) = self.shrink.forward(&x, mode, p, rng)?;
        let pose = sgt_inverse(&s_inverse, &grid_output)?;
        let cache = GlnCache {
            input: g2d.clone(),
            s_forward,
            s_inverse,
            expand,
            blocks,
            shrink,
            grid_output,
            pose: pose.clone(),
        };
        Ok((pose, cache))
    }

    /// Deterministic evaluation-mode prediction.
    pub fn predict(&mut self, g2d: &Tensor) -> Result<Tensor> {
        let mut unused = seeded(0);
        Ok(self.forward(g2d, Mode::Eval, usize::MAX, &mut unused)?.0)
    }

    /// Accumulates gradients of every parameter, including the learnable assignment
    /// scores (straight-through: the gradient with respect to the discrete assignment,
    /// through both the placement and the read-back, is used as is).
    pub fn backward(&mut self, cache: &GlnCache, grad_pose: &Tensor) -> Result<()> {
        let (grad_grid, grad_s_inverse) =
            sgt_inverse_backward(&cache.s_inverse, &cache.grid_output, &cache.pose, grad_pose)?;
        let mut g = self.shrink.backward(&cache.shrink, &grad_grid)?;
        for (block, (c1, c2)) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            let inner = block.second.backward(c2, &g)?;
            let inner = block.first.backward(c1, &inner)?;
            for (a, b) in g.data_mut().iter_mut().zip(inner.data()) {
                *a += b;
            }
        }
        let grad_input_grid = self.expand.backward(&cache.expand, &g)?;
        if let SgtState::Learnable(st) = &mut self.sgt {
            let grad_s_forward = sgt_forward_assignment_grad(&grad_input_grid, &cache.input, &cache.s_forward)?;
            let total: Vec<f64> = grad_s_forward.iter().zip(&grad_s_inverse).map(|(a, b)| a + b).collect();
            st.scores.accumulate_grad(&crate::sgt::ste_backward(&total));
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Parameter)> {
        let mut out = Vec::new();
        self.expand.named_params("expand", &mut out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.first.named_params(&format!("block{i}.first"), &mut out);
            b.second.named_params(&format!("block{i}.second"), &mut out);
        }
        self.shrink.named_params("shrink", &mut out);
        if let SgtState::Learnable(st) = &self.sgt {
            out.push(("assignment.scores".into(), &st.scores));
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out = Vec::new();
        self.expand.named_params_mut("expand", &mut out);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.first.named_params_mut(&format!("block{i}.first"), &mut out);
            b.second.named_params_mut(&format!("block{i}.second"), &mut out);
        }
        self.shrink.named_params_mut("shrink", &mut out);
        if let SgtState::Learnable(st) = &mut self.sgt {
            out.push(("assignment.scores".into(), &mut st.scores));
        }
        out
    }

    pub fn named_stats_mut(&mut self) -> Vec<(String, &mut RunningStats)> {
        let mut out = Vec::new();
        self.expand.named_stats_mut("expand", &mut out);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.first.named_stats_mut(&format!("block{i}.first"), &mut out);
            b.second.named_stats_mut(&format!("block{i}.second"), &mut out);
        }
        self.shrink.named_stats_mut("shrink", &mut out);
        out
    }
}

/// Mean over samples and joints of the squared Euclidean distance.
pub fn gln_loss(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    check_pose_pair(pred, gt)?;
    let rows = (pred.len() / 3).max(1) as f64;
    Ok(pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / rows)
}

pub fn gln_loss_grad(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    check_pose_pair(pred, gt)?;
    let rows = (pred.len() / 3).max(1) as f64;
    Tensor::new(
        pred.shape(),
        pred.data()
            .iter()
            .zip(gt.data())
            .map(|(a, b)| 2.0 * (a - b) / rows)
            .collect(),
    )
}

fn check_pose_pair(pred: &Tensor, gt: &Tensor) -> Result<()> {
    if pred.shape() != gt.shape() || pred.shape().last() != Some(&OUTPUT_CHANNELS) {
        return Err(shape_err!(
            "prediction {:?} and target {:?} must match as [N,J,3]",
            pred.shape(),
            gt.shape()
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridconv::gridconv_forward;
    use crate::sgt::GridSpec;
    use rand::Rng;

    fn tiny(mode: SgtMode, dynamic: bool) -> GlnConfig {
        GlnConfig {
            latent_channels: 8,
            blocks: 1,
            dynamic,
            sgt_mode: mode,
            seed: 3,
            ..GlnConfig::default()
        }
    }

    fn input(n: usize, seed: u64) -> Tensor {
        let mut rng = seeded(seed);
        Tensor::from_fn(&[n, 17, 2], |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn default_budget() {
        let b = param_breakdown(&GlnConfig::default(), 17);
        assert_eq!(b.convolution, 4_744_198);
        assert_eq!(b.batch_norm, 2_560);
        assert_eq!(b.attention, 46_122);
        assert_eq!(b.total, 4_792_880);
        let model = GlnModel::build(&GlnConfig::default(), &SkeletonTopology::h36m17()).unwrap();
        assert_eq!(model.param_count(), b.total);
    }

    #[test]
    fn count_matches_held_tensors_across_configs() {
        let topo = SkeletonTopology::h36m17();
        for (blocks, plan, dynamic, mode) in [
            (0, "3-1", true, SgtMode::Handcrafted),
            (1, "5-13-3", false, SgtMode::Random),
            (3, "3-33-35-11-3", true, SgtMode::Learnable),
        ] {
            let cfg = GlnConfig {
                latent_channels: 6,
                blocks,
                kernel_plan: Some(plan.parse().unwrap()),
                dynamic,
                sgt_mode: mode,
                ..GlnConfig::default()
            };
            for seed in [0, 9] {
                let model = GlnModel::build(&GlnConfig { seed, ..cfg.clone() }, &topo).unwrap();
                assert_eq!(model.param_count(), param_breakdown(&cfg, 17).total);
            }
        }
    }

    #[test]
    fn zero_blocks_still_lifts() {
        let cfg = GlnConfig {
            blocks: 0,
            latent_channels: 4,
            ..GlnConfig::default()
        };
        let mut model = GlnModel::build(&cfg, &SkeletonTopology::h36m17()).unwrap();
        assert_eq!(model.predict(&input(3, 1)).unwrap().shape(), &[3, 17, 3]);
    }

    #[test]
    fn eval_is_repeatable_and_rejects_non_finite() {
        let mut model = GlnModel::build(&tiny(SgtMode::Learnable, true), &SkeletonTopology::h36m17()).unwrap();
        let x = input(4, 2);
        assert_eq!(model.predict(&x).unwrap(), model.predict(&x).unwrap());
        let mut bad = x.clone();
        bad.data_mut()[5] = f64::NAN;
        assert!(model.predict(&bad).is_err());
    }

    /// Rebuilds eval-mode output from the public pieces: placement, each convolution,
    /// affine batch norm with running statistics, ReLU, the skip, and read-back.
    #[test]
    fn forward_equals_explicit_composition() {
        for dynamic in [false, true] {
            let mut model = GlnModel::build(&tiny(SgtMode::Handcrafted, dynamic), &SkeletonTopology::h36m17()).unwrap();
            // non-trivial running statistics
            let mut rng = seeded(4);
            for _ in 0..3 {
                model
                    .forward(&input(6, rng.random()), Mode::Train, 0, &mut rng)
                    .unwrap();
            }
            let x = input(5, 11);
            let got = model.predict(&x).unwrap();

            let s = model.current_assignment();
            let conv = |layer: &DGridConvLayer, t: &Tensor| -> Tensor {
                let mut l = layer.clone();
                if dynamic {
                    l.forward(t, Mode::Eval).unwrap().0
                } else {
                    gridconv_forward(&l, t).unwrap()
                }
            };
            let post = |layer: &GridLayer, t: Tensor| -> Tensor {
                let bn = layer.bn.as_ref().unwrap();
                let c = bn.features();
                let mut out = t;
                for (i, v) in out.data_mut().iter_mut().enumerate() {
                    let k = i % c;
                    let z = (*v - bn.stats.mean[k]) / (bn.stats.var[k] + bn.settings.eps).sqrt();
                    *v = (bn.gamma.data()[k] * z + bn.beta.data()[k]).max(0.0);
                }
                out
            };
            let mut h = post(&model.expand, conv(&model.expand.conv, &sgt_forward(&s, &x).unwrap()));
            for b in &model.blocks {
                let inner = post(
                    &b.second,
                    conv(&b.second.conv, &post(&b.first, conv(&b.first.conv, &h))),
                );
                h = Tensor::from_fn(h.shape(), |i| inner.data()[i] + h.data()[i]);
            }
            let want = sgt_inverse(&s, &conv(&model.shrink.conv, &h)).unwrap();
            assert!(
                got.max_abs_diff(&want) <= 1e-12,
                "dynamic={dynamic}: {}",
                got.max_abs_diff(&want)
            );
        }
    }

    #[test]
    fn zeroed_block_is_identity() {
        let mut model = GlnModel::build(&tiny(SgtMode::Handcrafted, true), &SkeletonTopology::h36m17()).unwrap();
        let block = &mut model.blocks[0];
        for layer in [&mut block.first, &mut block.second] {
            let mut params = Vec::new();
            layer.conv.named_params_mut("", &mut params);
            for (name, p) in params {
                if !name.contains("attention") {
                    p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        let x = Tensor::from_fn(&[2, 5, 5, 8], |i| (i as f64 * 0.37).sin());
        let mut rng = seeded(0);
        let (h, _) = block.first.forward(&x, Mode::Eval, 0.25, &mut rng).unwrap();
        let (h, _) = block.second.forward(&h, Mode::Eval, 0.25, &mut rng).unwrap();
        let out = Tensor::from_fn(x.shape(), |i| x.data()[i] + h.data()[i]);
        // eval batch norm at init maps 0 to beta = 0, so the block passes its input through
        assert!(out.max_abs_diff(&x) <= 1e-12);
    }

    #[test]
    fn loss_values() {
        let gt = Tensor::from_fn(&[1, 17, 3], |i| i as f64);
        assert_eq!(gln_loss(&gt, &gt).unwrap(), 0.0);
        let mut pred = gt.clone();
        pred.data_mut()[0] += 3.0;
        pred.data_mut()[1] += 4.0;
        assert!((gln_loss(&pred, &gt).unwrap() - 25.0 / 17.0).abs() < 1e-15);
        assert!(gln_loss(&pred, &Tensor::zeros(&[1, 17, 2])).is_err());

        let mut rng = seeded(1);
        let a = Tensor::from_fn(&[4, 17, 3], |_| rng.random_range(-1.0..1.0));
        let b = Tensor::from_fn(&[4, 17, 3], |_| rng.random_range(-1.0..1.0));
        let mut sum = 0.0;
        for n in 0..4 {
            for j in 0..17 {
                let mut d2 = 0.0;
                for c in 0..3 {
                    let i = (n * 17 + j) * 3 + c;
                    d2 += (a.data()[i] - b.data()[i]).powi(2);
                }
                sum += d2;
            }
        }
        assert!((gln_loss(&a, &b).unwrap() - sum / 68.0).abs() <= 1e-12);
    }

    #[test]
    fn file_mode_needs_covering_one_hot_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        let topo = SkeletonTopology::h36m17();
        let s = build_handcrafted_layout(&topo, GridSpec::default()).unwrap();
        std::fs::write(&path, crate::sgt::format_layout(&s, &topo)).unwrap();
        let cfg = GlnConfig {
            sgt_mode: SgtMode::File,
            layout_file: Some(path.clone()),
            ..tiny(SgtMode::File, true)
        };
        let model = GlnModel::build(&cfg, &topo).unwrap();
        assert_eq!(model.current_assignment(), s);
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("0,0,head", "0,0,pelvis");
        std::fs::write(
            &path,
            text.lines()
                .filter(|l| !l.ends_with(",head"))
                .collect::<Vec<_>>()
                .join("\n"),
        )
        .unwrap();
        assert!(GlnModel::build(&cfg, &topo).is_err());
    }
}
