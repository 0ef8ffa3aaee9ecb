use rand::Rng;

use super::CheckResult;
use crate::data::{
    load_dataset, prepare, save_dataset, synth_generate, CameraModel, Dataset, Normalization, SynthConfig,
};
use crate::error::{invalid, Result};
use crate::gln::{load_model, save_model, GlnConfig, GlnModel, SgtMode};
use crate::sgt::{
    build_handcrafted_layout, format_layout, parse_layout, random_sgt, sgt_forward, sgt_inverse, validate_constraints,
    AssignmentMatrix, GridSpec, SkeletonTopology,
};
use crate::tensor_engine::rng::seeded;
use crate::tensor_engine::Tensor;

/// Placing a pose on the grid and reading it back returns every value bit-exactly,
/// for `cases` random covering assignments on random grids.
pub fn sgt_round_trip_check(cases: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = seeded(seed);
    let mut mismatches = 0usize;
    for _ in 0..cases {
        let grid = GridSpec::new(rng.random_range(1..=7), rng.random_range(1..=7))?;
        let joints = rng.random_range(1..=grid.cells());
        let s = random_sgt(joints, grid, &mut rng)?;
        let (n, c) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let g = Tensor::from_fn(&[n, joints, c], |_| rng.random_range(-1e3..1e3));
        let back = sgt_inverse(&s, &sgt_forward(&s, &g)?)?;
        mismatches += back
            .data()
            .iter()
            .zip(g.data())
            .filter(|(a, b)| a.to_bits() != b.to_bits())
            .count();
    }
    Ok(
        CheckResult::measured("sgt.round_trip_mismatched_values", mismatches as f64, 0.0)
            .with_detail(format!("{cases} assignments")),
    )
}

/// A joint replicated in two cells holding 2 and 4 reads back as exactly 3.
pub fn replica_mean_check() -> Result<CheckResult> {
    let grid = GridSpec::new(1, 3)?;
    let s = AssignmentMatrix::from_cell_joints(grid, 2, &[0, 1, 0])?;
    let d = Tensor::new(&[1, 3, 1], vec![2.0, 7.0, 4.0])?;
    let pose = sgt_inverse(&s, &d)?;
    let ok = pose.data() == [3.0, 7.0];
    Ok(CheckResult::boolean(
        "sgt.replica_mean_2_4_is_3",
        ok,
        format!("{:?}", pose.data()),
    ))
}

/// The bundled layout satisfies adjacency and one-hot constraints.
pub fn handcrafted_layout_check() -> Result<CheckResult> {
    let topology = SkeletonTopology::h36m17();
    let s = build_handcrafted_layout(&topology, GridSpec::default())?;
    let report = validate_constraints(&s, &topology)?;
    let detail = report
        .violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ");
    Ok(CheckResult::measured("sgt.handcrafted_violations", report.violations.len() as f64, 0.0).with_detail(detail))
}

/// Largest pixel distance between each stored 2D joint and the projection of its stored
/// 3D position, with the root placed on the ray through its 2D point at the camera's root depth.
pub fn reprojection_check(dataset: &Dataset) -> Result<CheckResult> {
    let root = dataset.topology.root_index();
    let mut worst: f64 = 0.0;
    for (i, s) in dataset.samples.iter().enumerate() {
        let cam = s
            .camera
            .ok_or_else(|| invalid!("sample {i} has no camera; reprojection needs one"))?;
        let r = cam.back_project(s.pose2d[root], cam.root_depth)?;
        for (p3, p2) in s.pose3d.iter().zip(&s.pose2d) {
            let uv = cam.project([p3[0] + r[0], p3[1] + r[1], p3[2] + r[2]])?;
            worst = worst.max((uv[0] - p2[0]).abs().max((uv[1] - p2[1]).abs()));
        }
    }
    Ok(
        CheckResult::measured("data.reprojection_max_px", worst, 1e-6)
            .with_detail(format!("{} samples", dataset.len())),
    )
}

/// Layout text, dataset CSV and model checkpoint survive a write and read unchanged.
pub fn artifact_round_trips() -> Result<Vec<CheckResult>> {
    let topology = SkeletonTopology::h36m17();
    let mut out = Vec::new();

    let mut rng = seeded(5);
    let s = random_sgt(17, GridSpec::default(), &mut rng)?;
    let back = parse_layout(&format_layout(&s, &topology), &topology, None)?;
    out.push(CheckResult::boolean("artifact.layout_text", back == s, ""));

    let dir = std::env::temp_dir().join(format!(
        "gridlift-verify-{}-{}",
        std::process::id(),
        rng.random::<u64>()
    ));
    std::fs::create_dir_all(&dir)?;
    let result = (|| -> Result<()> {
        let ds = synth_generate(5, &topology, &CameraModel::default(), &SynthConfig::default(), 9)?;
        let path = dir.join("poses.csv");
        save_dataset(&ds, &path)?;
        let back = load_dataset(&path, &topology)?;
        out.push(CheckResult::boolean(
            "artifact.dataset_csv",
            back.samples == ds.samples,
            "",
        ));

        let config = GlnConfig {
            latent_channels: 4,
            blocks: 1,
            sgt_mode: SgtMode::Learnable,
            seed: 2,
            ..GlnConfig::default()
        };
        let mut model = GlnModel::build(&config, &topology)?;
        let x = prepare(&ds, Normalization::Standard)?.inputs;
        let path = dir.join("model.ckpt");
        save_model(&model, &path)?;
        let mut back = load_model(&path)?;
        let same_outputs = model
            .predict(&x)?
            .data()
            .iter()
            .zip(back.predict(&x)?.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        out.push(CheckResult::boolean(
            "artifact.checkpoint",
            back == model && same_outputs,
            "",
        ));
        Ok(())
    })();
    let _ = std::fs::remove_dir_all(&dir);
    result?;
    Ok(out)
}
