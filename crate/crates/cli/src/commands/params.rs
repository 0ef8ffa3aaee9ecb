use std::path::PathBuf;

use gridlift::gln::param_breakdown;

use crate::config::RunConfig;
use crate::failure::{emit_stdout, CmdResult};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Run config JSON (default: the default model on the bundled skeleton).
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn run(a: Args) -> CmdResult {
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.model.validate()?;
    let joints = cfg.topology()?.num_joints();
    let breakdown = param_breakdown(&cfg.model, joints);
    let mut json = serde_json::to_value(breakdown)?;
    json.as_object_mut()
        .expect("breakdown serializes to an object")
        .insert("total_millions".into(), (breakdown.total as f64 / 1e6).into());
    emit_stdout(&(serde_json::to_string_pretty(&json)? + "\n"))
}
