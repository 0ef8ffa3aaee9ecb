use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::Normalization;
use crate::error::{invalid, Error, Result};
use crate::gridconv::BnSettings;
use crate::sgt::GridSpec;

/// Where the joint-to-cell assignment comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SgtMode {
    #[default]
    Handcrafted,
    Learnable,
    Random,
    File,
}

impl FromStr for SgtMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "handcrafted" => Ok(Self::Handcrafted),
            "learnable" => Ok(Self::Learnable),
            "random" => Ok(Self::Random),
            "file" => Ok(Self::File),
            _ => Err(invalid!("unknown sgt mode `{s}` (handcrafted|learnable|random|file)")),
        }
    }
}

/// Kernel size of every layer: expand, two per residual block, shrink.
/// Written `a-bc-bc-d`, one dash-separated group per stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelPlan(Vec<usize>);

impl KernelPlan {
    pub fn uniform(blocks: usize, k: usize) -> Self {
        Self(vec![k; 2 * blocks + 2])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.0
    }

    pub fn blocks(&self) -> usize {
        (self.0.len() - 2) / 2
    }

    pub fn expand(&self) -> usize {
        self.0[0]
    }

    pub fn block(&self, b: usize) -> (usize, usize) {
        (self.0[1 + 2 * b], self.0[2 + 2 * b])
    }

    pub fn shrink(&self) -> usize {
        self.0[self.0.len() - 1]
    }
}

impl Default for KernelPlan {
    fn default() -> Self {
        Self::uniform(2, 3)
    }
}

impl FromStr for KernelPlan {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let groups: Vec<&str> = s.trim().split('-').collect();
        let bad = || invalid!("kernel plan `{s}` must look like a-bc-...-d with single-digit odd sizes");
        if groups.len() < 2 || groups[0].len() != 1 || groups[groups.len() - 1].len() != 1 {
            return Err(bad());
        }
        if groups[1..groups.len() - 1].iter().any(|g| g.len() != 2) {
            return Err(bad());
        }
        let sizes = groups
            .concat()
            .chars()
            .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(bad))
            .collect::<Result<Vec<_>>>()?;
        if sizes.iter().any(|k| k % 2 == 0) {
            return Err(invalid!("kernel plan `{s}` has an even kernel size"));
        }
        Ok(Self(sizes))
    }
}

impl fmt::Display for KernelPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expand())?;
        for b in 0..self.blocks() {
            let (x, y) = self.block(b);
            write!(f, "-{x}{y}")?;
        }
        write!(f, "-{}", self.shrink())
    }
}

impl Serialize for KernelPlan {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KernelPlan {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlnConfig {
    pub latent_channels: usize,
    pub blocks: usize,
    /// Defaults to all-3 kernels of the right length when absent.
    pub kernel_plan: Option<KernelPlan>,
    pub dropout_p: f64,
    pub dynamic: bool,
    pub grid: GridSpec,
    pub sgt_mode: SgtMode,
    /// Layout for `file` mode; optional seed layout for `learnable` mode.
    pub layout_file: Option<PathBuf>,
    pub normalization: Normalization,
    pub seed: u64,
    pub batch_norm: BnSettings,
}

impl Default for GlnConfig {
    fn default() -> Self {
        Self {
            latent_channels: 256,
            blocks: 2,
            kernel_plan: None,
            dropout_p: 0.25,
            dynamic: true,
            grid: GridSpec::default(),
            sgt_mode: SgtMode::Handcrafted,
            layout_file: None,
            normalization: Normalization::Standard,
            seed: 0,
            batch_norm: BnSettings::default(),
        }
    }
}

impl GlnConfig {
    pub fn kernels(&self) -> KernelPlan {
        self.kernel_plan
            .clone()
            .unwrap_or_else(|| KernelPlan::uniform(self.blocks, 3))
    }

    /// Same config with every defaulted field spelled out.
    pub fn resolved(&self) -> Self {
        Self {
            kernel_plan: Some(self.kernels()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_channels == 0 {
            return Err(invalid!("latent_channels must be at least 1"));
        }
        let plan = self.kernels();
        if plan.blocks() != self.blocks {
            return Err(invalid!(
                "kernel plan `{plan}` describes {} residual blocks, config has {}",
                plan.blocks(),
                self.blocks
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(invalid!("dropout_p must be in [0, 1), got {}", self.dropout_p));
        }
        if self.sgt_mode == SgtMode::File && self.layout_file.is_none() {
            return Err(invalid!("sgt_mode `file` needs layout_file"));
        }
        if !(self.batch_norm.eps > 0.0 && (0.0..=1.0).contains(&self.batch_norm.momentum)) {
            return Err(invalid!("batch norm needs eps > 0 and momentum in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    /// `base · factor^epoch`
    PerEpoch { factor: f64 },
    /// `base · factor^(epoch / every)`
    Step { every: usize, factor: f64 },
}

impl LrSchedule {
    pub fn for_mode(mode: SgtMode) -> Self {
        match mode {
            SgtMode::Learnable => Self::Step { every: 10, factor: 0.1 },
            _ => Self::PerEpoch { factor: 0.96 },
        }
    }

    pub fn lr(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            Self::PerEpoch { factor } => base * factor.powi(epoch as i32),
            Self::Step { every, factor } => base * factor.powi((epoch / every.max(1)) as i32),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    /// Defaults to the schedule tied to the assignment mode.
    pub lr_schedule: Option<LrSchedule>,
    /// First epoch without Gumbel noise in learnable mode.
    pub gumbel_cutoff: usize,
    pub gumbel_temperature: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            batch_size: 200,
            epochs: 100,
            base_lr: 1e-3,
            lr_schedule: None,
            gumbel_cutoff: 30,
            gumbel_temperature: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainHyper {
    pub fn schedule(&self, mode: SgtMode) -> LrSchedule {
        self.lr_schedule.unwrap_or(LrSchedule::for_mode(mode))
    }

    pub fn resolved(&self, mode: SgtMode) -> Self {
        Self {
            lr_schedule: Some(self.schedule(mode)),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(invalid!(
                "batch_size must be at least 2 (batch statistics need two samples)"
            ));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(invalid!("base_lr must be positive"));
        }
        if !(self.gumbel_temperature >= 0.0) {
            return Err(invalid!("gumbel_temperature must be non-negative"));
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2) && self.adam_eps > 0.0) {
            return Err(invalid!("Adam needs betas in [0, 1) and eps > 0"));
        }
        Ok(())
    }
}
