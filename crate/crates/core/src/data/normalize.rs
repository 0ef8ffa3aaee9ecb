use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CameraModel, Dataset, PoseSample};
use crate::error::{invalid, shape_err, Error, Result};
use crate::tensor_engine::Tensor;

pub const METERS_PER_MM: f64 = 1e-3;

/// How network targets are expressed.
///
/// `Standard`: root-relative 3D in meters. `Uvz`: normalized pixel `(u, v)` plus
/// root-relative depth in meters, lifted back to 3D through the camera at evaluation.
/// Inputs are normalized pixels in both.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Standard,
    Uvz,
}

impl FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "uvz" => Ok(Self::Uvz),
            _ => Err(invalid!("unknown normalization `{s}` (standard|uvz)")),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Standard => "standard",
            Self::Uvz => "uvz",
        })
    }
}

/// Pixel to `[-1, 1]` per axis over the image extent.
pub fn normalize_2d(uv: [f64; 2], camera: &CameraModel) -> [f64; 2] {
    [2.0 * uv[0] / camera.image_w - 1.0, 2.0 * uv[1] / camera.image_h - 1.0]
}

pub fn denormalize_2d(n: [f64; 2], camera: &CameraModel) -> [f64; 2] {
    [(n[0] + 1.0) * camera.image_w / 2.0, (n[1] + 1.0) * camera.image_h / 2.0]
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedSample {
    pub pose2d: Vec<[f64; 2]>,
    pub pose3d: Vec<[f64; 3]>,
}

fn camera_of(sample: &PoseSample) -> Result<&CameraModel> {
    sample
        .camera
        .as_ref()
        .ok_or_else(|| invalid!("sample has no camera; image size is needed to normalize"))
}

pub fn normalize_standard(sample: &PoseSample) -> Result<NormalizedSample> {
    let cam = camera_of(sample)?;
    Ok(NormalizedSample {
        pose2d: sample.pose2d.iter().map(|&uv| normalize_2d(uv, cam)).collect(),
        pose3d: sample.pose3d.iter().map(|p| p.map(|v| v * METERS_PER_MM)).collect(),
    })
}

/// `(u, v, z)` targets: normalized pixels and root-relative depth in meters (root at 0).
pub fn uvz_targets(sample: &PoseSample) -> Result<Vec<[f64; 3]>> {
    let cam = camera_of(sample)?;
    Ok(sample
        .pose2d
        .iter()
        .zip(&sample.pose3d)
        .map(|(&uv, p)| {
            let n = normalize_2d(uv, cam);
            [n[0], n[1], p[2] * METERS_PER_MM]
        })
        .collect())
}

/// Lifts `(u px, v px, z mm)` with `z` relative to the root depth into camera space,
/// then re-expresses the result relative to joint `root`.
pub fn uvz_project(pred: &[[f64; 3]], camera: &CameraModel, root: usize) -> Result<Vec<[f64; 3]>> {
    if root >= pred.len() {
        return Err(shape_err!("root {root} out of range for {} joints", pred.len()));
    }
    let abs = pred
        .iter()
        .map(|p| camera.back_project([p[0], p[1]], p[2] + camera.root_depth))
        .collect::<Result<Vec<_>>>()?;
    let r = abs[root];
    Ok(abs.iter().map(|p| [p[0] - r[0], p[1] - r[1], p[2] - r[2]]).collect())
}

/// A dataset flattened into network tensors plus what is needed to score predictions in mm.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub normalization: Normalization,
    /// `[N,J,2]` normalized pixels.
    pub inputs: Tensor,
    /// `[N,J,3]` targets in the normalization's units.
    pub targets: Tensor,
    /// `[N,J,3]` root-relative millimeters.
    pub ground_truth_mm: Tensor,
    pub cameras: Vec<CameraModel>,
    pub root: usize,
}

pub fn prepare(dataset: &Dataset, normalization: Normalization) -> Result<PreparedData> {
    let n = dataset.len();
    let j = dataset.topology.num_joints();
    if n == 0 {
        return Err(invalid!("dataset is empty"));
    }
    let mut inputs = Vec::with_capacity(n * j * 2);
    let mut targets = Vec::with_capacity(n * j * 3);
    let mut gt = Vec::with_capacity(n * j * 3);
    let mut cameras = Vec::with_capacity(n);
    for (i, s) in dataset.samples.iter().enumerate() {
        if s.pose2d.len() != j || s.pose3d.len() != j {
            return Err(shape_err!("sample {i} has {} joints, topology has {j}", s.pose2d.len()));
        }
        let norm = normalize_standard(s).map_err(|e| invalid!("sample {i}: {e}"))?;
        inputs.extend(norm.pose2d.iter().flatten());
        match normalization {
            Normalization::Standard => targets.extend(norm.pose3d.iter().flatten()),
            Normalization::Uvz => targets.extend(uvz_targets(s)?.iter().flatten()),
        }
        gt.extend(s.pose3d.iter().flatten());
        cameras.push(*camera_of(s)?);
    }
    let data = PreparedData {
        normalization,
        inputs: Tensor::new(&[n, j, 2], inputs)?,
        targets: Tensor::new(&[n, j, 3], targets)?,
        ground_truth_mm: Tensor::new(&[n, j, 3], gt)?,
        cameras,
        root: dataset.topology.root_index(),
    };
    data.inputs.ensure_finite("2D inputs")?;
    data.targets.ensure_finite("3D targets")?;
    Ok(data)
}

impl PreparedData {
    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn joints(&self) -> usize {
        self.inputs.shape()[1]
    }

    /// Rows `indices` of inputs and targets.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let j = self.joints();
        let gather = |t: &Tensor, c: usize| {
            let mut out = Vec::with_capacity(indices.len() * j * c);
            for &i in indices {
                out.extend_from_slice(&t.data()[i * j * c..(i + 1) * j * c]);
            }
            Tensor::new(&[indices.len(), j, c], out).expect("gathered rows match shape")
        };
        (gather(&self.inputs, 2), gather(&self.targets, 3))
    }

    /// Network outputs for every sample (`[N,J,3]`) to root-relative millimeters.
    pub fn decode_mm(&self, pred: &Tensor) -> Result<Tensor> {
        if pred.shape() != self.targets.shape() {
            return Err(shape_err!(
                "predictions {:?} vs targets {:?}",
                pred.shape(),
                self.targets.shape()
            ));
        }
        match self.normalization {
            Normalization::Standard => Ok(Tensor::from_fn(pred.shape(), |i| pred.data()[i] / METERS_PER_MM)),
            Normalization::Uvz => {
                let j = self.joints();
                let mut out = Vec::with_capacity(pred.len());
                for (rows, cam) in pred.data().chunks_exact(j * 3).zip(&self.cameras) {
                    let pix: Vec<[f64; 3]> = rows
                        .chunks_exact(3)
                        .map(|r| {
                            let uv = denormalize_2d([r[0], r[1]], cam);
                            [uv[0], uv[1], r[2] / METERS_PER_MM]
                        })
                        .collect();
                    out.extend(uvz_project(&pix, cam, self.root)?.iter().flatten());
                }
                Tensor::new(pred.shape(), out)
            }
        }
    }
}
