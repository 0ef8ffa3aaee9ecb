//! Pose datasets: the camera model, synthetic skeleton generation, CSV storage,
//! and the two normalization schemes used for training.

mod camera;
mod io;
mod normalize;
mod synth;

pub use camera::CameraModel;
pub use io::{camera_sidecar_path, dataset_joint_names, load_dataset, save_dataset};
pub use normalize::{
    denormalize_2d, normalize_2d, normalize_standard, prepare, uvz_project, uvz_targets, Normalization,
    NormalizedSample, PreparedData, METERS_PER_MM,
};
pub use synth::{rest_bones, synth_generate, SynthConfig};

use crate::sgt::SkeletonTopology;

/// One labeled pose: 2D pixels, root-relative camera-space 3D millimeters.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSample {
    pub pose2d: Vec<[f64; 2]>,
    pub pose3d: Vec<[f64; 3]>,
    pub camera: Option<CameraModel>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DatasetMeta {
    pub source: String,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub topology: SkeletonTopology,
    pub samples: Vec<PoseSample>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
