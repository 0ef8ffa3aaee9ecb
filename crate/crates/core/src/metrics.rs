//! Pose error metrics over `[N,J,3]` millimeter tensors.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Error, Result};
use crate::tensor_engine::Tensor;

/// PCK threshold for the 3DHP-style metrics.
pub const PCK_THRESHOLD_MM: f64 = 150.0;

/// Thresholds averaged by [`auc`]: 5, 10, ..., 150 mm.
pub fn auc_thresholds() -> impl Iterator<Item = f64> {
    (1..=30).map(|i| 5.0 * i as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    /// Rotation, translation and uniform scale.
    #[default]
    Similarity,
    /// Rotation and translation only.
    Rigid,
}

impl FromStr for Alignment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity" => Ok(Self::Similarity),
            "rigid" => Ok(Self::Rigid),
            _ => Err(invalid!("unknown alignment `{s}` (similarity|rigid)")),
        }
    }
}

impl fmt::Display for Alignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Similarity => "similarity",
            Self::Rigid => "rigid",
        })
    }
}

fn dims(pred: &Tensor, gt: &Tensor) -> Result<(usize, usize)> {
    match (pred.shape(), gt.shape()) {
        ([n, j, 3], [m, k, 3]) if n == m && j == k => Ok((*n, *j)),
        (a, b) => Err(shape_err!(
            "prediction {a:?} and ground truth {b:?} must be matching [N,J,3]"
        )),
    }
}

fn joints(t: &Tensor, sample: usize, j: usize) -> Vec<Vector3<f64>> {
    t.data()[sample * j * 3..(sample + 1) * j * 3]
        .chunks_exact(3)
        .map(|p| Vector3::new(p[0], p[1], p[2]))
        .collect()
}

/// Euclidean error of every joint, `N·J` values in sample-major order.
pub fn joint_errors(pred: &Tensor, gt: &Tensor) -> Result<Vec<f64>> {
    dims(pred, gt)?;
    Ok(pred
        .data()
        .chunks_exact(3)
        .zip(gt.data().chunks_exact(3))
        .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt())
        .collect())
}

pub fn mpjpe(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    let e = joint_errors(pred, gt)?;
    Ok(e.iter().sum::<f64>() / e.len().max(1) as f64)
}

/// Mean error of each joint over samples.
pub fn per_joint_mpjpe(pred: &Tensor, gt: &Tensor) -> Result<Vec<f64>> {
    let (n, j) = dims(pred, gt)?;
    let e = joint_errors(pred, gt)?;
    let mut out = vec![0.0; j];
    for row in e.chunks_exact(j) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    Ok(out)
}

/// Least-squares alignment of `pred` onto `gt`. `None` when `gt` is collinear (or has
/// fewer than three joints), in which case the rotation is not determined.
pub fn procrustes_align(pred: &[Vector3<f64>], gt: &[Vector3<f64>], alignment: Alignment) -> Option<Vec<Vector3<f64>>> {
    let n = gt.len();
    if n < 3 || pred.len() != n {
        return None;
    }
    let mean = |v: &[Vector3<f64>]| v.iter().sum::<Vector3<f64>>() / n as f64;
    let (mu_p, mu_g) = (mean(pred), mean(gt));
    let mut cov = Matrix3::zeros();
    let mut gt_scatter = Matrix3::zeros();
    let mut pred_sq = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let (pc, gc) = (p - mu_p, g - mu_g);
        cov += gc * pc.transpose();
        gt_scatter += gc * gc.transpose();
        pred_sq += pc.norm_squared();
    }
    let spread = gt_scatter.symmetric_eigenvalues();
    let mut ev: Vec<f64> = spread.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    if ev[1] <= 1e-12 * ev[2].max(f64::MIN_POSITIVE) {
        return None;
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let d = (u * v_t).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rot = u * fix * v_t;
    let scale = match alignment {
        Alignment::Rigid => 1.0,
        Alignment::Similarity if pred_sq > 0.0 => {
            (svd.singular_values[0] + svd.singular_values[1] + d * svd.singular_values[2]) / pred_sq
        }
        Alignment::Similarity => 1.0,
    };
    Some(pred.iter().map(|p| scale * rot * (p - mu_p) + mu_g).collect())
}

/// Aligned MPJPE of each sample; `None` marks a degenerate ground truth.
pub fn pa_mpjpe_per_sample(pred: &Tensor, gt: &Tensor, alignment: Alignment) -> Result<Vec<Option<f64>>> {
    let (n, j) = dims(pred, gt)?;
    Ok((0..n)
        .map(|s| {
            let g = joints(gt, s, j);
            procrustes_align(&joints(pred, s, j), &g, alignment)
                .map(|a| a.iter().zip(&g).map(|(x, y)| (x - y).norm()).sum::<f64>() / j as f64)
        })
        .collect())
}

/// Mean aligned MPJPE; fails on the first sample whose ground truth is collinear.
pub fn pa_mpjpe(pred: &Tensor, gt: &Tensor, alignment: Alignment) -> Result<f64> {
    let per = pa_mpjpe_per_sample(pred, gt, alignment)?;
    let mut total = 0.0;
    for (sample, v) in per.iter().enumerate() {
        total += v.ok_or(Error::Degenerate { sample })?;
    }
    Ok(total / per.len().max(1) as f64)
}

/// Percentage of joints with error at most `threshold_mm`.
pub fn pck(pred: &Tensor, gt: &Tensor, threshold_mm: f64) -> Result<f64> {
    let e = joint_errors(pred, gt)?;
    Ok(pck_of(&e, threshold_mm))
}

fn pck_of(errors: &[f64], threshold: f64) -> f64 {
    100.0 * errors.iter().filter(|&&e| e <= threshold).count() as f64 / errors.len().max(1) as f64
}

/// Mean PCK over [`auc_thresholds`].
pub fn auc(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    let e = joint_errors(pred, gt)?;
    Ok(auc_of(&e))
}

fn auc_of(errors: &[f64]) -> f64 {
    auc_thresholds().map(|t| pck_of(errors, t)).sum::<f64>() / 30.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mpjpe_mm: f64,
    pub pa_mpjpe_mm: f64,
    pub pck_percent: f64,
    pub auc_percent: f64,
    pub per_joint: Vec<f64>,
    /// Samples left out of `pa_mpjpe_mm` because their ground truth is collinear.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate_samples: Vec<usize>,
}

pub fn metric_report(pred: &Tensor, gt: &Tensor, alignment: Alignment) -> Result<MetricReport> {
    let e = joint_errors(pred, gt)?;
    let per = pa_mpjpe_per_sample(pred, gt, alignment)?;
    let ok: Vec<f64> = per.iter().flatten().copied().collect();
    Ok(MetricReport {
        mpjpe_mm: e.iter().sum::<f64>() / e.len().max(1) as f64,
        pa_mpjpe_mm: ok.iter().sum::<f64>() / ok.len().max(1) as f64,
        pck_percent: pck_of(&e, PCK_THRESHOLD_MM),
        auc_percent: auc_of(&e),
        per_joint: per_joint_mpjpe(pred, gt)?,
        degenerate_samples: per
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(i, _)| i)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_engine::rng::seeded;
    use nalgebra::{Rotation3, Unit};
    use rand::Rng;

    fn random_poses(n: usize, j: usize, seed: u64) -> Tensor {
        let mut rng = seeded(seed);
        Tensor::from_fn(&[n, j, 3], |_| rng.random_range(-500.0..500.0))
    }

    fn transform(t: &Tensor, rot: &Rotation3<f64>, scale: f64, shift: Vector3<f64>) -> Tensor {
        let mut out = t.clone();
        for p in out.data_mut().chunks_exact_mut(3) {
            let q = scale * (rot * Vector3::new(p[0], p[1], p[2])) + shift;
            p.copy_from_slice(q.as_slice());
        }
        out
    }

    /// Horn's closed form: the optimal rotation is the top eigenvector (as a unit
    /// quaternion) of a 4×4 symmetric matrix built from the cross-covariance.
    /// Eigenvectors via cyclic Jacobi sweeps.
    fn horn_align(pred: &[Vector3<f64>], gt: &[Vector3<f64>], with_scale: bool) -> Vec<Vector3<f64>> {
        let n = pred.len() as f64;
        let mp = pred.iter().sum::<Vector3<f64>>() / n;
        let mg = gt.iter().sum::<Vector3<f64>>() / n;
        let mut s = [[0.0; 3]; 3];
        let mut pred_sq = 0.0;
        for (p, g) in pred.iter().zip(gt) {
            let (a, b) = (p - mp, g - mg);
            pred_sq += a.norm_squared();
            for r in 0..3 {
                for c in 0..3 {
                    s[r][c] += a[r] * b[c];
                }
            }
        }
        let [[sxx, sxy, sxz], [syx, syy, syz], [szx, szy, szz]] = s;
        let mut m = [
            [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
            [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
            [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
            [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
        ];
        let mut v = [[0.0; 4]; 4];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for _ in 0..100 {
            for p in 0..4 {
                for q in p + 1..4 {
                    if m[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * c;
                    for k in 0..4 {
                        let (mkp, mkq) = (m[k][p], m[k][q]);
                        m[k][p] = c * mkp - sn * mkq;
                        m[k][q] = sn * mkp + c * mkq;
                    }
                    for k in 0..4 {
                        let (mpk, mqk) = (m[p][k], m[q][k]);
                        m[p][k] = c * mpk - sn * mqk;
                        m[q][k] = sn * mpk + c * mqk;
                    }
                    for row in v.iter_mut() {
                        let (vp, vq) = (row[p], row[q]);
                        row[p] = c * vp - sn * vq;
                        row[q] = sn * vp + c * vq;
                    }
                }
            }
        }
        let best = (0..4).max_by(|&a, &b| m[a][a].total_cmp(&m[b][b])).unwrap();
        let (w, x, y, z) = (v[0][best], v[1][best], v[2][best], v[3][best]);
        let rot = Matrix3::new(
            w * w + x * x - y * y - z * z,
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            w * w - x * x + y * y - z * z,
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            w * w - x * x - y * y + z * z,
        );
        let scale = if with_scale {
            pred.iter()
                .zip(gt)
                .map(|(p, g)| (g - mg).dot(&(rot * (p - mp))))
                .sum::<f64>()
                / pred_sq
        } else {
            1.0
        };
        pred.iter().map(|p| scale * rot * (p - mp) + mg).collect()
    }

    #[test]
    fn trivial_values() {
        let gt = random_poses(4, 17, 1);
        assert_eq!(mpjpe(&gt, &gt).unwrap(), 0.0);
        let mut pred = Tensor::zeros(&[1, 17, 3]);
        pred.data_mut()[..2].copy_from_slice(&[3.0, 4.0]);
        let zero = Tensor::zeros(&[1, 17, 3]);
        assert!((mpjpe(&pred, &zero).unwrap() - 5.0 / 17.0).abs() < 1e-15);
        assert_eq!(pck(&gt, &gt, 150.0).unwrap(), 100.0);
        assert_eq!(auc(&gt, &gt).unwrap(), 100.0);
        assert!(mpjpe(&gt, &zero).is_err());
    }

    #[test]
    fn pck_boundaries() {
        let zero = Tensor::zeros(&[1, 4, 3]);
        let far = Tensor::from_fn(&[1, 4, 3], |i| if i % 3 == 0 { 200.0 } else { 0.0 });
        assert_eq!(pck(&far, &zero, 150.0).unwrap(), 0.0);
        assert_eq!(auc(&far, &zero).unwrap(), 0.0);
        let half = Tensor::from_fn(&[1, 4, 3], |i| {
            if i == 0 || i == 3 {
                200.0
            } else if i % 3 == 0 {
                150.0
            } else {
                0.0
            }
        });
        assert_eq!(pck(&half, &zero, 150.0).unwrap(), 50.0);
        assert_eq!(pck(&half, &zero, 149.0).unwrap(), 0.0);
        let mut last = 0.0;
        for t in [0.0, 100.0, 150.0, 199.0, 200.0] {
            let v = pck(&half, &zero, t).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn auc_of_uniform_errors_is_half() {
        let mut rng = seeded(9);
        let errors: Vec<f64> = (0..100_000).map(|_| rng.random_range(0.0..150.0)).collect();
        let a = auc_of(&errors);
        assert!((a - 50.0).abs() <= 2.0, "{a}");
    }

    #[test]
    fn similarity_copies_align_exactly() {
        let gt = random_poses(10, 17, 2);
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.3, -1.0, 0.5)), 1.1);
        let pred = transform(&gt, &rot, 2.0, Vector3::new(10.0, -40.0, 300.0));
        assert!(pa_mpjpe(&pred, &gt, Alignment::Similarity).unwrap() <= 1e-9);
        let rigid = transform(&gt, &rot, 1.0, Vector3::new(10.0, -40.0, 300.0));
        assert!(pa_mpjpe(&rigid, &gt, Alignment::Rigid).unwrap() <= 1e-9);
        assert!(pa_mpjpe(&pred, &gt, Alignment::Rigid).unwrap() > 1.0);
    }

    #[test]
    fn alignment_matches_quaternion_oracle() {
        let mut rng = seeded(4);
        for case in 0..50 {
            let gt = random_poses(1, 17, 100 + case);
            let rot = Rotation3::from_axis_angle(
                &Unit::new_normalize(Vector3::new(rng.random(), rng.random(), rng.random::<f64>() - 0.5)),
                rng.random_range(-3.0..3.0),
            );
            let mut pred = transform(&gt, &rot, rng.random_range(0.5..2.0), Vector3::new(5.0, 6.0, 7.0));
            pred.data_mut()
                .iter_mut()
                .for_each(|v| *v += rng.random_range(-80.0..80.0));
            let (p, g) = (joints(&pred, 0, 17), joints(&gt, 0, 17));
            for (alignment, with_scale) in [(Alignment::Similarity, true), (Alignment::Rigid, false)] {
                let ours = procrustes_align(&p, &g, alignment).unwrap();
                let oracle = horn_align(&p, &g, with_scale);
                for (a, b) in ours.iter().zip(&oracle) {
                    assert!((a - b).norm() <= 1e-9, "case {case}: {}", (a - b).norm());
                }
            }
        }
    }

    #[test]
    fn alignment_never_increases_error() {
        for case in 0..1000 {
            let gt = random_poses(1, 17, 5000 + case);
            let pred = random_poses(1, 17, 9000 + case);
            let pa = pa_mpjpe(&pred, &gt, Alignment::Similarity).unwrap();
            assert!(pa <= mpjpe(&pred, &gt).unwrap() + 1e-9);
        }
    }

    #[test]
    fn rigid_motion_of_both_leaves_mpjpe() {
        let gt = random_poses(3, 17, 7);
        let pred = random_poses(3, 17, 8);
        let rot = Rotation3::from_euler_angles(0.4, -1.2, 2.0);
        let shift = Vector3::new(1.0, 2.0, 3.0);
        let a = mpjpe(&pred, &gt).unwrap();
        let b = mpjpe(&transform(&pred, &rot, 1.0, shift), &transform(&gt, &rot, 1.0, shift)).unwrap();
        assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn collinear_ground_truth_is_flagged() {
        let line = Tensor::from_fn(
            &[2, 5, 3],
            |i| if i < 15 { (i / 3) as f64 * 10.0 } else { (i % 7) as f64 },
        );
        let pred = random_poses(2, 5, 3);
        assert!(matches!(
            pa_mpjpe(&pred, &line, Alignment::Similarity),
            Err(Error::Degenerate { sample: 0 })
        ));
        let report = metric_report(&pred, &line, Alignment::Similarity).unwrap();
        assert_eq!(report.degenerate_samples, vec![0]);
        let json = serde_json::to_value(&report).unwrap();
        for key in ["mpjpe_mm", "pa_mpjpe_mm", "pck_percent", "auc_percent", "per_joint"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn sample_order_does_not_matter() {
        let gt = random_poses(6, 17, 20);
        let pred = random_poses(6, 17, 21);
        let perm = [3, 0, 5, 1, 4, 2];
        let shuffle = |t: &Tensor| {
            let mut out = Vec::new();
            for &i in &perm {
                out.extend_from_slice(&t.data()[i * 51..(i + 1) * 51]);
            }
            Tensor::new(t.shape(), out).unwrap()
        };
        let a = metric_report(&pred, &gt, Alignment::Similarity).unwrap();
        let b = metric_report(&shuffle(&pred), &shuffle(&gt), Alignment::Similarity).unwrap();
        assert!((a.mpjpe_mm - b.mpjpe_mm).abs() <= 1e-9);
        assert!((a.pa_mpjpe_mm - b.pa_mpjpe_mm).abs() <= 1e-9);
        assert_eq!(a.pck_percent, b.pck_percent);
    }
}
