use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{CameraModel, Dataset, DatasetMeta, PoseSample};
use crate::error::{Error, Result};
use crate::sgt::SkeletonTopology;

const POSE_HEADER: [&str; 7] = ["sample_id", "joint_name", "u", "v", "x", "y", "z"];
const CAMERA_HEADER: [&str; 8] = ["sample_id", "fx", "fy", "cx", "cy", "image_w", "image_h", "root_depth"];

/// `poses.csv` → `poses.cameras.csv`.
pub fn camera_sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.cameras.csv"))
}

/// Writes one row per (sample, joint) plus a camera sidecar when any sample has a camera.
/// Floats use the shortest representation that parses back to the same value.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let names = dataset.topology.joint_names();
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{}", POSE_HEADER.join(","))?;
    for (i, s) in dataset.samples.iter().enumerate() {
        for (j, name) in names.iter().enumerate() {
            let (uv, p) = (s.pose2d[j], s.pose3d[j]);
            writeln!(f, "{i},{name},{},{},{},{},{}", uv[0], uv[1], p[0], p[1], p[2])?;
        }
    }
    f.flush()?;
    let sidecar = camera_sidecar_path(path);
    if dataset.samples.iter().any(|s| s.camera.is_some()) {
        let mut f = BufWriter::new(File::create(&sidecar)?);
        writeln!(f, "{}", CAMERA_HEADER.join(","))?;
        for (i, s) in dataset.samples.iter().enumerate() {
            if let Some(c) = s.camera {
                writeln!(
                    f,
                    "{i},{},{},{},{},{},{},{}",
                    c.fx, c.fy, c.cx, c.cy, c.image_w, c.image_h, c.root_depth
                )?;
            }
        }
        f.flush()?;
    } else if sidecar.exists() {
        std::fs::remove_file(sidecar)?;
    }
    Ok(())
}

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        msg: msg.into(),
    }
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if found != header {
        return Err(parse_err(
            1,
            format!("expected header {}, found {}", header.join(","), found.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", header.len(), rec.len()),
            ));
        }
        rows.push((line, rec));
    }
    Ok(rows)
}

fn num(line: u64, rec: &csv::StringRecord, col: usize) -> Result<f64> {
    let v: f64 = rec[col]
        .parse()
        .map_err(|_| parse_err(line, format!("column {}: `{}` is not a number", col + 1, &rec[col])))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("column {}: non-finite value", col + 1)));
    }
    Ok(v)
}

fn sample_id(line: u64, rec: &csv::StringRecord) -> Result<usize> {
    rec[0]
        .parse()
        .map_err(|_| parse_err(line, format!("`{}` is not a sample id", &rec[0])))
}

/// Joint names of the first sample, in file order; lets callers compare a file
/// against a skeleton before loading it.
pub fn dataset_joint_names(path: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for (line, rec) in read_rows(path, &POSE_HEADER)? {
        if sample_id(line, &rec)? != 0 {
            break;
        }
        names.push(rec[1].to_string());
    }
    Ok(names)
}

/// Reads a dataset written by [`save_dataset`]. Sample ids must be `0..N` in order and
/// every sample must list each joint of `topology` exactly once.
pub fn load_dataset(path: &Path, topology: &SkeletonTopology) -> Result<Dataset> {
    let j = topology.num_joints();
    let mut samples: Vec<PoseSample> = Vec::new();
    let mut seen: Vec<Vec<bool>> = Vec::new();
    for (line, rec) in read_rows(path, &POSE_HEADER)? {
        let id = sample_id(line, &rec)?;
        if id == samples.len() {
            samples.push(PoseSample {
                pose2d: vec![[0.0; 2]; j],
                pose3d: vec![[0.0; 3]; j],
                camera: None,
            });
            seen.push(vec![false; j]);
        } else if id + 1 != samples.len() {
            return Err(parse_err(line, format!("sample id {id} out of order")));
        }
        let joint = topology
            .joint_index(&rec[1])
            .ok_or_else(|| parse_err(line, format!("unknown joint `{}`", &rec[1])))?;
        if std::mem::replace(&mut seen[id][joint], true) {
            return Err(parse_err(line, format!("joint `{}` repeated in sample {id}", &rec[1])));
        }
        let s = &mut samples[id];
        s.pose2d[joint] = [num(line, &rec, 2)?, num(line, &rec, 3)?];
        s.pose3d[joint] = [num(line, &rec, 4)?, num(line, &rec, 5)?, num(line, &rec, 6)?];
    }
    if let Some(id) = seen.iter().position(|s| s.iter().any(|v| !v)) {
        return Err(Error::InvalidArgument(format!("sample {id} is missing joints")));
    }
    let sidecar = camera_sidecar_path(path);
    if sidecar.exists() {
        for (line, rec) in read_rows(&sidecar, &CAMERA_HEADER)? {
            let id = sample_id(line, &rec)?;
            let vals = (1..8).map(|c| num(line, &rec, c)).collect::<Result<Vec<_>>>()?;
            let cam = CameraModel {
                fx: vals[0],
                fy: vals[1],
                cx: vals[2],
                cy: vals[3],
                image_w: vals[4],
                image_h: vals[5],
                root_depth: vals[6],
            };
            cam.validate().map_err(|e| parse_err(line, e.to_string()))?;
            let sample = samples
                .get_mut(id)
                .ok_or_else(|| parse_err(line, format!("camera for unknown sample {id}")))?;
            sample.camera = Some(cam);
        }
    }
    Ok(Dataset {
        topology: topology.clone(),
        samples,
        meta: DatasetMeta {
            source: path.display().to_string(),
            seed: None,
        },
    })
}
