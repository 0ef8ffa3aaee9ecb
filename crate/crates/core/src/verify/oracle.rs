use nalgebra::{Rotation3, Vector3};
use rand::Rng;

use super::CheckResult;
use crate::error::Result;
use crate::gln::{LrSchedule, SgtMode};
use crate::gridconv::{dgridconv_forward, gridconv_forward, AttentionHead, BnSettings, DGridConvLayer, LayerConfig};
use crate::metrics::{auc, mpjpe, pa_mpjpe, pck, Alignment, PCK_THRESHOLD_MM};
use crate::sgt::GridSpec;
use crate::tensor_engine::rng::seeded;
use crate::tensor_engine::{EngineRng, Mode, PadMode, Tensor};

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Per-cell kernel scalings computed with plain loops, `[N,H,P,K,K]` flattened.
fn reference_attention(head: &AttentionHead, x: &Tensor, mode: Mode) -> Vec<f64> {
    let (n, h, p, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let hidden = head.fc1_bias.len();
    let out = head.fc2_bias.len();
    let pooled: Vec<f64> = (0..n * c)
        .map(|bc| {
            let (b, ch) = (bc / c, bc % c);
            (0..h * p)
                .map(|cell| x.data()[(b * h * p + cell) * c + ch])
                .sum::<f64>()
                / (h * p) as f64
        })
        .collect();
    let eps = head.bn.settings.eps;
    let normed: Vec<f64> = (0..n * c)
        .map(|bc| {
            let ch = bc % c;
            let (mean, var) = match mode {
                Mode::Train => {
                    let m = (0..n).map(|b| pooled[b * c + ch]).sum::<f64>() / n as f64;
                    let v = (0..n).map(|b| (pooled[b * c + ch] - m).powi(2)).sum::<f64>() / n as f64;
                    (m, v)
                }
                Mode::Eval => (head.bn.stats.mean[ch], head.bn.stats.var[ch]),
            };
            head.bn.gamma.data()[ch] * (pooled[bc] - mean) / (var + eps).sqrt() + head.bn.beta.data()[ch]
        })
        .collect();
    let mut alpha = Vec::with_capacity(n * out);
    for b in 0..n {
        let hid: Vec<f64> = (0..hidden)
            .map(|u| {
                let z = head.fc1_bias.data()[u]
                    + (0..c)
                        .map(|ch| normed[b * c + ch].max(0.0) * head.fc1_weight.data()[ch * hidden + u])
                        .sum::<f64>();
                z.max(0.0)
            })
            .collect();
        for o in 0..out {
            let z = head.fc2_bias.data()[o]
                + (0..hidden)
                    .map(|u| hid[u] * head.fc2_weight.data()[u * out + o])
                    .sum::<f64>();
            alpha.push(sigmoid(z));
        }
    }
    alpha
}

/// Brute-force grid convolution: for every output cell, walk the `K×K` window with
/// wrap-around or clamped indices on the unpadded grid, scale each tap by the cell's
/// attention (when dynamic), and sum both branches.
pub fn reference_dgridconv(layer: &DGridConvLayer, x: &Tensor, mode: Mode) -> Tensor {
    let cfg = layer.config;
    let (n, h, p) = (x.shape()[0], cfg.grid.rows, cfg.grid.cols);
    let (k, s) = (cfg.kernel, cfg.pad() as isize);
    let (cin, cout) = (cfg.in_channels, cfg.out_channels);
    let alpha = layer.attention.as_ref().map(|head| reference_attention(head, x, mode));
    let mut out = vec![0.0; n * h * p * cout];
    for br in [&layer.branch_circular, &layer.branch_replicate] {
        for b in 0..n {
            for i in 0..h {
                for j in 0..p {
                    for co in 0..cout {
                        let mut acc = br.bias.data()[co];
                        for ki in 0..k {
                            for kj in 0..k {
                                let (r, q) = (i as isize + ki as isize - s, j as isize + kj as isize - s);
                                let (r, q) = match br.pad_mode {
                                    PadMode::Circular => (r.rem_euclid(h as isize), q.rem_euclid(p as isize)),
                                    PadMode::Replicate => (r.clamp(0, h as isize - 1), q.clamp(0, p as isize - 1)),
                                };
                                let scale = alpha
                                    .as_ref()
                                    .map_or(1.0, |a| a[(((b * h + i) * p + j) * k + ki) * k + kj]);
                                for ci in 0..cin {
                                    let w = br.kernel.data()[((ki * k + kj) * cin + ci) * cout + co];
                                    acc += scale * w * x.data()[((b * h + r as usize) * p + q as usize) * cin + ci];
                                }
                            }
                        }
                        out[((b * h + i) * p + j) * cout + co] += acc;
                    }
                }
            }
        }
    }
    Tensor::new(&[n, h, p, cout], out).expect("shape matches")
}

struct Case {
    layer: DGridConvLayer,
    x: Tensor,
}

fn random_case(dynamic: bool, rng: &mut EngineRng) -> Result<Case> {
    let kernel = [1, 3, 5][rng.random_range(0..3)];
    let lo = kernel / 2 + 1;
    let grid = GridSpec::new(rng.random_range(lo.max(2)..=7), rng.random_range(lo.max(2)..=7))?;
    let config = LayerConfig {
        kernel,
        in_channels: rng.random_range(1..=4),
        out_channels: rng.random_range(1..=4),
        grid,
        dynamic,
    };
    let mut layer = DGridConvLayer::new(config, BnSettings::default(), rng)?;
    if let Some(head) = layer.attention.as_mut() {
        for v in head.bn.stats.mean.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        for v in head.bn.stats.var.iter_mut() {
            *v = rng.random_range(0.5..2.0);
        }
    }
    let n = rng.random_range(1..=3);
    let x = Tensor::from_fn(&[n, grid.rows, grid.cols, config.in_channels], |_| {
        rng.random_range(-2.0..2.0)
    });
    Ok(Case { layer, x })
}

/// Vanilla and dynamic grid convolution against [`reference_dgridconv`] on `cases` random
/// configurations (half of each kind); reports the worst absolute difference.
pub fn conv_oracle_check(cases: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    let mut worst_case = 0;
    for case in 0..cases {
        let dynamic = case % 2 == 1;
        let Case { mut layer, x } = random_case(dynamic, &mut rng)?;
        let mode = if dynamic && x.shape()[0] >= 2 && rng.random::<bool>() {
            Mode::Train
        } else {
            Mode::Eval
        };
        let want = reference_dgridconv(&layer, &x, mode);
        let got = if dynamic {
            dgridconv_forward(&mut layer, &x, mode)?.0
        } else {
            gridconv_forward(&layer, &x)?
        };
        let diff = got.max_abs_diff(&want);
        if diff > worst || diff.is_nan() {
            worst = if diff.is_nan() { f64::INFINITY } else { diff };
            worst_case = case;
        }
    }
    Ok(CheckResult::measured("conv_oracle.max_abs_diff", worst, 1e-10)
        .with_detail(format!("{cases} cases, worst at case {worst_case}")))
}

/// Dynamic layers whose attention is driven to saturation (output bias far positive)
/// against the vanilla convolution with the same kernels; reports the worst absolute difference.
pub fn degeneracy_check(cases: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let Case { mut layer, x } = random_case(true, &mut rng)?;
        let head = layer.attention.as_mut().expect("dynamic layer");
        head.fc2_bias.value.data_mut().iter_mut().for_each(|v| *v = 40.0);
        let mode = if x.shape()[0] >= 2 { Mode::Train } else { Mode::Eval };
        let (y, cache) = dgridconv_forward(&mut layer, &x, mode)?;
        let min_alpha = cache
            .alpha()
            .map_or(0.0, |a| a.data().iter().cloned().fold(f64::INFINITY, f64::min));
        let mut vanilla = layer.clone();
        vanilla.config.dynamic = false;
        vanilla.attention = None;
        let v = gridconv_forward(&vanilla, &x)?;
        let diff = y.max_abs_diff(&v);
        worst = worst.max(if diff.is_nan() || min_alpha < 0.5 {
            f64::INFINITY
        } else {
            diff
        });
    }
    Ok(CheckResult::measured("degeneracy.max_abs_diff", worst, 1e-6).with_detail(format!("{cases} cases")))
}

fn random_pose(j: usize, rng: &mut EngineRng) -> Vec<[f64; 3]> {
    (0..j)
        .map(|_| {
            [
                rng.random_range(-800.0..800.0),
                rng.random_range(-800.0..800.0),
                rng.random_range(-800.0..800.0),
            ]
        })
        .collect()
}

fn to_tensor(samples: &[Vec<[f64; 3]>]) -> Tensor {
    let j = samples[0].len();
    Tensor::new(
        &[samples.len(), j, 3],
        samples.iter().flatten().flatten().copied().collect(),
    )
    .expect("consistent")
}

fn random_similarity(rng: &mut EngineRng) -> (Rotation3<f64>, f64, Vector3<f64>) {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let rot = Rotation3::new(axis.normalize() * rng.random_range(-3.0..3.0));
    let t = Vector3::new(
        rng.random_range(-2000.0..2000.0),
        rng.random_range(-2000.0..2000.0),
        rng.random_range(-2000.0..2000.0),
    );
    (rot, rng.random_range(0.3..3.0), t)
}

/// Procrustes alignment, its ordering against raw MPJPE, and the PCK/AUC endpoints.
pub fn metric_checks() -> Result<Vec<CheckResult>> {
    let mut rng = seeded(41);
    let j = 17;
    let mut out = Vec::new();

    let mut gts = Vec::new();
    let mut preds = Vec::new();
    for _ in 0..50 {
        let gt = random_pose(j, &mut rng);
        let (rot, scale, t) = random_similarity(&mut rng);
        preds.push(
            gt.iter()
                .map(|p| {
                    let v = rot * Vector3::from(*p) * scale + t;
                    [v.x, v.y, v.z]
                })
                .collect::<Vec<_>>(),
        );
        gts.push(gt);
    }
    let pa = pa_mpjpe(&to_tensor(&preds), &to_tensor(&gts), Alignment::Similarity)?;
    out.push(CheckResult::measured("metrics.pa_of_similar_copy_mm", pa, 1e-9));

    let mut violations = 0;
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let gt = to_tensor(&[random_pose(j, &mut rng)]);
        let noise = rng.random_range(1.0..300.0);
        let pred = Tensor::from_fn(gt.shape(), |i| gt.data()[i] + rng.random_range(-noise..noise));
        let (pa, raw) = (pa_mpjpe(&pred, &gt, Alignment::Similarity)?, mpjpe(&pred, &gt)?);
        worst_gap = worst_gap.max(pa - raw);
        if pa > raw + 1e-9 {
            violations += 1;
        }
    }
    out.push(
        CheckResult::measured("metrics.pa_not_above_mpjpe_violations", violations as f64, 0.0)
            .with_detail(format!("1000 cases, largest pa - mpjpe {worst_gap:.3e} mm")),
    );

    let gt = to_tensor(&[random_pose(j, &mut rng), random_pose(j, &mut rng)]);
    let far = Tensor::from_fn(gt.shape(), |i| gt.data()[i] + 1000.0);
    let endpoints = [
        ("metrics.pck_exact_copy", pck(&gt, &gt, PCK_THRESHOLD_MM)?, 100.0),
        ("metrics.auc_exact_copy", auc(&gt, &gt)?, 100.0),
        ("metrics.pck_far_copy", pck(&far, &gt, PCK_THRESHOLD_MM)?, 0.0),
        ("metrics.auc_far_copy", auc(&far, &gt)?, 0.0),
    ];
    for (name, got, want) in endpoints {
        out.push(CheckResult::measured(name, (got - want).abs(), 0.0).with_detail(format!("{got}")));
    }
    Ok(out)
}

/// Learning-rate values at the schedule's characteristic epochs.
pub fn schedule_checks() -> Vec<CheckResult> {
    let cases = [
        ("schedule.handcrafted_epoch0", SgtMode::Handcrafted, 0, 0.001),
        ("schedule.handcrafted_epoch1", SgtMode::Handcrafted, 1, 0.00096),
        ("schedule.learnable_epoch9", SgtMode::Learnable, 9, 0.001),
        ("schedule.learnable_epoch10", SgtMode::Learnable, 10, 0.0001),
    ];
    cases
        .into_iter()
        .map(|(name, mode, epoch, want)| {
            let got = LrSchedule::for_mode(mode).lr(1e-3, epoch);
            CheckResult::measured(name, ((got - want) / want).abs(), 1e-12).with_detail(format!("{got}"))
        })
        .collect()
}
