use std::path::PathBuf;

use clap::ValueEnum;
use gridlift::data::{dataset_joint_names, load_dataset, prepare, Normalization};
use gridlift::gln::{load_model, predict_all};
use gridlift::metrics::{metric_report, Alignment};
use gridlift::Error;
use serde::Serialize;

use crate::config::{sidecar, write_json};
use crate::failure::{at_path, emit_stdout, CmdResult};

/// Protocol 1 scores raw MPJPE, protocol 2 scores it after alignment. `p1star` is
/// protocol 1 on ground-truth 2D inputs, which is what every dataset here holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    P1,
    P1star,
    P2,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset CSV to score.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Protocol::P1)]
    protocol: Protocol,
    /// The checkpoint predicts pixel-plus-depth targets; lift them through the camera.
    #[arg(long)]
    uvz: bool,
    /// Alignment used by protocol 2: similarity or rigid.
    #[arg(long, default_value = "similarity")]
    alignment: Alignment,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Resolved<'a> {
    checkpoint: &'a PathBuf,
    data: &'a PathBuf,
    protocol: Protocol,
    normalization: Normalization,
    alignment: Alignment,
}

pub fn run(a: Args) -> CmdResult {
    let mut model = at_path(&a.checkpoint, load_model(&a.checkpoint))?;
    let names = at_path(&a.data, dataset_joint_names(&a.data))?;
    if names != model.topology.joint_names() {
        return Err(Error::Incompatible(format!(
            "data joints [{}] do not match checkpoint joints [{}]",
            names.join(","),
            model.topology.joint_names().join(",")
        ))
        .into());
    }
    let normalization = if a.uvz {
        Normalization::Uvz
    } else {
        Normalization::Standard
    };
    if normalization != model.config.normalization {
        return Err(Error::Incompatible(format!(
            "checkpoint was trained with {} targets; pass {} to evaluate it",
            model.config.normalization,
            if a.uvz { "no --uvz" } else { "--uvz" }
        ))
        .into());
    }
    let dataset = at_path(&a.data, load_dataset(&a.data, &model.topology))?;
    let data = prepare(&dataset, normalization)?;
    let pred = data.decode_mm(&predict_all(&mut model, &data)?)?;
    let report = metric_report(&pred, &data.ground_truth_mm, a.alignment)?;

    let headline = match a.protocol {
        Protocol::P1 | Protocol::P1star => report.mpjpe_mm,
        Protocol::P2 => report.pa_mpjpe_mm,
    };
    let mut json = serde_json::to_value(&report)?;
    let obj = json.as_object_mut().expect("report serializes to an object");
    obj.insert("protocol".into(), serde_json::to_value(a.protocol)?);
    obj.insert("alignment".into(), serde_json::to_value(a.alignment)?);
    obj.insert("samples".into(), data.len().into());
    obj.insert("headline_mm".into(), headline.into());
    let text = serde_json::to_string_pretty(&json)?;
    emit_stdout(&(text + "\n"))?;
    if let Some(out) = &a.out {
        write_json(out, &json)?;
        let resolved = Resolved {
            checkpoint: &a.checkpoint,
            data: &a.data,
            protocol: a.protocol,
            normalization,
            alignment: a.alignment,
        };
        write_json(&sidecar(out), &resolved)?;
    }
    Ok(())
}
