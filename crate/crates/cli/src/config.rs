//! Run configuration for `train`, read from one JSON document.

use std::path::{Path, PathBuf};

use gridlift::gln::{GlnConfig, TrainHyper};
use gridlift::sgt::SkeletonTopology;
use serde::{Deserialize, Serialize};

use crate::failure::{at_path, CmdResult, Failure};

/// Everything a training run needs. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: GlnConfig,
    pub training: TrainHyper,
    /// Dataset CSV to train on.
    pub train_data: PathBuf,
    /// Optional held-out dataset scored after training.
    pub eval_data: Option<PathBuf>,
    /// Skeleton CSV; the bundled 17-joint skeleton when absent.
    pub skeleton: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Seeds the training stream (shuffling, Gumbel and dropout draws).
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: GlnConfig::default(),
            training: TrainHyper::default(),
            train_data: PathBuf::from("train.csv"),
            eval_data: None,
            skeleton: None,
            out_dir: PathBuf::from("run"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CmdResult<Self> {
        let text = at_path(path, std::fs::read_to_string(path).map_err(Into::into))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.train_data);
        fix(&mut self.out_dir);
        self.eval_data.as_mut().map(fix);
        self.skeleton.as_mut().map(fix);
        self.model.layout_file.as_mut().map(fix);
    }

    /// Same config with every defaulted field spelled out.
    pub fn resolved(&self) -> Self {
        Self {
            model: self.model.resolved(),
            training: self.training.resolved(self.model.sgt_mode),
            ..self.clone()
        }
    }

    pub fn topology(&self) -> CmdResult<SkeletonTopology> {
        load_topology(self.skeleton.as_deref())
    }
}

/// The skeleton in `path`, or the bundled 17-joint skeleton.
pub fn load_topology(path: Option<&Path>) -> CmdResult<SkeletonTopology> {
    match path {
        None => Ok(SkeletonTopology::h36m17()),
        Some(p) => {
            let text = at_path(p, std::fs::read_to_string(p).map_err(Into::into))?;
            at_path(p, SkeletonTopology::parse(&text))
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CmdResult<T> {
    let text = at_path(path, std::fs::read_to_string(path).map_err(Into::into))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    at_path(path, std::fs::write(path, text).map_err(Into::into))
}

/// `<output>.config.json`, the place a command records its resolved flags.
pub fn sidecar(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}
