use std::path::PathBuf;

use gridlift::data::{camera_sidecar_path, save_dataset, synth_generate, CameraModel, SynthConfig};
use serde::Serialize;

use crate::config::{load_topology, read_json, sidecar, write_json};
use crate::failure::{at_path, CmdResult};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Number of samples.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skeleton CSV (default: bundled 17-joint skeleton).
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Camera JSON (default: built-in camera).
    #[arg(long)]
    camera: Option<PathBuf>,
    /// Pose sampling JSON: rotation range and root placement.
    #[arg(long)]
    synth: Option<PathBuf>,
    /// Output dataset CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Resolved<'a> {
    n: u64,
    seed: u64,
    topology: &'a Option<PathBuf>,
    joints: &'a [String],
    camera: CameraModel,
    synth: SynthConfig,
}

pub fn run(a: Args) -> CmdResult {
    let topology = load_topology(a.topology.as_deref())?;
    let camera: CameraModel = match &a.camera {
        Some(p) => read_json(p)?,
        None => CameraModel::default(),
    };
    let synth: SynthConfig = match &a.synth {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    let ds = synth_generate(a.n as usize, &topology, &camera, &synth, a.seed)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    at_path(&a.out, save_dataset(&ds, &a.out))?;
    let resolved = Resolved {
        n: a.n,
        seed: a.seed,
        topology: &a.topology,
        joints: topology.joint_names(),
        camera,
        synth,
    };
    write_json(&sidecar(&a.out), &resolved)?;
    eprintln!(
        "wrote {} samples to {} (camera: {})",
        ds.len(),
        a.out.display(),
        camera_sidecar_path(&a.out).display()
    );
    Ok(())
}
