use rand::Rng;

use super::CheckResult;
use crate::data::{prepare, synth_generate, CameraModel, Normalization, SynthConfig};
use crate::error::Result;
use crate::gln::{gln_loss, gln_loss_grad, GlnConfig, GlnModel, SgtMode};
use crate::gridconv::{AttentionHead, BnSettings, DGridConvLayer, LayerConfig};
use crate::sgt::{
    random_sgt, sgt_forward, sgt_forward_assignment_grad, sgt_inverse, sgt_inverse_backward, GridSpec, SkeletonTopology,
};
use crate::tensor_engine::rng::seeded;
use crate::tensor_engine::{
    activation, activation_backward, affine, affine_backward, batch_norm, batch_norm_backward, conv2d, conv2d_backward,
    dropout, dropout_backward, global_average_pool, global_average_pool_backward, pad_grid, pad_grid_backward,
    Activation, EngineRng, Mode, PadMode, RunningStats, Tensor,
};

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const E2E_SEED: u64 = 3;

/// `‖numeric − analytic‖ / max(‖numeric‖, ‖analytic‖)`, or the absolute difference
/// when both gradients are (numerically) zero.
pub fn relative_error(numeric: &[f64], analytic: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = numeric.iter().zip(analytic).map(|(a, b)| a - b).collect();
    let scale = norm(numeric).max(norm(analytic));
    if scale < 1e-10 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn central(len: usize, mut f: impl FnMut(usize, f64) -> f64) -> Vec<f64> {
    (0..len)
        .map(|i| (f(i, GRADCHECK_STEP) - f(i, -GRADCHECK_STEP)) / (2.0 * GRADCHECK_STEP))
        .collect()
}

fn check(name: &str, numeric: &[f64], analytic: &[f64]) -> CheckResult {
    CheckResult::measured(name, relative_error(numeric, analytic), GRADCHECK_TOLERANCE)
        .with_detail(format!("{} entries", numeric.len()))
}

fn random(shape: &[usize], rng: &mut EngineRng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn bumped(t: &Tensor, i: usize, delta: f64) -> Tensor {
    let mut t = t.clone();
    t.data_mut()[i] += delta;
    t
}

fn bumped_vec(v: &[f64], i: usize, delta: f64) -> Vec<f64> {
    let mut v = v.to_vec();
    v[i] += delta;
    v
}

/// Finite-difference checks of every layer primitive against its backward pass.
///
/// Each check differentiates `sum(w ⊙ f(inputs))` for a fixed random `w`.
pub fn primitive_checks() -> Result<Vec<CheckResult>> {
    let mut rng = seeded(101);
    let mut out = Vec::new();

    // affine
    let (x, wt, b) = (
        random(&[4, 5], &mut rng),
        random(&[5, 3], &mut rng),
        random(&[3], &mut rng),
    );
    let w = random(&[4, 3], &mut rng);
    let (gx, gw, gb) = affine_backward(&w, &x, &wt)?;
    let f = |x: &Tensor, wt: &Tensor, b: &[f64]| dot(&affine(x, wt, b).expect("shapes fixed"), &w);
    out.push(check(
        "affine.input",
        &central(x.len(), |i, h| f(&bumped(&x, i, h), &wt, b.data())),
        gx.data(),
    ));
    out.push(check(
        "affine.weight",
        &central(wt.len(), |i, h| f(&x, &bumped(&wt, i, h), b.data())),
        gw.data(),
    ));
    out.push(check(
        "affine.bias",
        &central(b.len(), |i, h| f(&x, &wt, &bumped_vec(b.data(), i, h))),
        &gb,
    ));

    // conv2d on an already padded grid
    let (x, k, b) = (
        random(&[2, 5, 6, 3], &mut rng),
        random(&[3, 3, 3, 2], &mut rng),
        random(&[2], &mut rng),
    );
    let w = random(&[2, 3, 4, 2], &mut rng);
    let (gx, gk, gb) = conv2d_backward(&w, &x, &k)?;
    let f = |x: &Tensor, k: &Tensor, b: &[f64]| dot(&conv2d(x, k, b).expect("shapes fixed"), &w);
    out.push(check(
        "conv2d.input",
        &central(x.len(), |i, h| f(&bumped(&x, i, h), &k, b.data())),
        gx.data(),
    ));
    out.push(check(
        "conv2d.kernel",
        &central(k.len(), |i, h| f(&x, &bumped(&k, i, h), b.data())),
        gk.data(),
    ));
    out.push(check(
        "conv2d.bias",
        &central(b.len(), |i, h| f(&x, &k, &bumped_vec(b.data(), i, h))),
        &gb,
    ));

    // padding
    for mode in [PadMode::Circular, PadMode::Replicate] {
        let x = random(&[2, 3, 4, 2], &mut rng);
        let w = random(&[2, 5, 6, 2], &mut rng);
        let g = pad_grid_backward(&w, 3, 4, 1, mode)?;
        let num = central(x.len(), |i, h| {
            dot(&pad_grid(&bumped(&x, i, h), 1, mode).expect("valid pad"), &w)
        });
        out.push(check(&format!("pad.{mode}"), &num, g.data()));
    }

    // batch norm, both modes
    for mode in [Mode::Train, Mode::Eval] {
        let (x, gamma, beta) = (
            random(&[6, 4], &mut rng),
            random(&[4], &mut rng),
            random(&[4], &mut rng),
        );
        let stats = RunningStats {
            mean: random(&[4], &mut rng).into_data(),
            var: (0..4).map(|_| rng.random_range(0.5..2.0)).collect(),
        };
        let w = random(&[6, 4], &mut rng);
        let f = |x: &Tensor, gamma: &[f64], beta: &[f64]| {
            let mut s = stats.clone();
            dot(
                &batch_norm(x, gamma, beta, &mut s, mode, 0.1, 1e-5)
                    .expect("valid batch")
                    .0,
                &w,
            )
        };
        let (_, cache) = batch_norm(&x, gamma.data(), beta.data(), &mut stats.clone(), mode, 0.1, 1e-5)?;
        let (gx, gg, gbeta) = batch_norm_backward(&cache, gamma.data(), &w)?;
        let tag = if mode == Mode::Train { "train" } else { "eval" };
        out.push(check(
            &format!("batch_norm.{tag}.input"),
            &central(x.len(), |i, h| f(&bumped(&x, i, h), gamma.data(), beta.data())),
            gx.data(),
        ));
        out.push(check(
            &format!("batch_norm.{tag}.gamma"),
            &central(4, |i, h| f(&x, &bumped_vec(gamma.data(), i, h), beta.data())),
            &gg,
        ));
        out.push(check(
            &format!("batch_norm.{tag}.beta"),
            &central(4, |i, h| f(&x, gamma.data(), &bumped_vec(beta.data(), i, h))),
            &gbeta,
        ));
    }

    // activations; ReLU inputs kept away from the kink
    for kind in [Activation::Relu, Activation::Sigmoid] {
        let x = Tensor::from_fn(&[5, 4], |_| {
            let m = rng.random_range(0.05..2.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        });
        let w = random(&[5, 4], &mut rng);
        let y = activation(&x, kind);
        let g = activation_backward(kind, &x, &y, &w)?;
        let num = central(x.len(), |i, h| dot(&activation(&bumped(&x, i, h), kind), &w));
        let name = if kind == Activation::Relu {
            "activation.relu"
        } else {
            "activation.sigmoid"
        };
        out.push(check(name, &num, g.data()));
    }

    // dropout with the mask held fixed by reseeding
    let x = random(&[4, 6], &mut rng);
    let w = random(&[4, 6], &mut rng);
    let (_, mask) = dropout(&x, 0.3, Mode::Train, &mut seeded(7))?;
    let g = dropout_backward(&w, mask.as_deref());
    let num = central(x.len(), |i, h| {
        dot(
            &dropout(&bumped(&x, i, h), 0.3, Mode::Train, &mut seeded(7))
                .expect("valid p")
                .0,
            &w,
        )
    });
    out.push(check("dropout", &num, g.data()));

    // global average pool
    let x = random(&[2, 3, 4, 3], &mut rng);
    let w = random(&[2, 3], &mut rng);
    let g = global_average_pool_backward(&w, 3, 4)?;
    let num = central(x.len(), |i, h| {
        dot(&global_average_pool(&bumped(&x, i, h)).expect("grid"), &w)
    });
    out.push(check("global_average_pool", &num, g.data()));

    out.extend(attention_checks(&mut rng)?);
    for dynamic in [false, true] {
        out.extend(layer_checks(dynamic, &mut rng)?);
    }
    out.extend(sgt_checks(&mut rng)?);

    // loss
    let (pred, gt) = (random(&[3, 5, 3], &mut rng), random(&[3, 5, 3], &mut rng));
    let g = gln_loss_grad(&pred, &gt)?;
    let num = central(pred.len(), |i, h| {
        gln_loss(&bumped(&pred, i, h), &gt).expect("same shape")
    });
    out.push(check("loss", &num, g.data()));
    Ok(out)
}

fn attention_checks(rng: &mut EngineRng) -> Result<Vec<CheckResult>> {
    let grid = GridSpec::new(4, 3)?;
    let mut head = AttentionHead::new(3, grid, 3, BnSettings::default(), rng);
    let x = random(&[3, 4, 3, 3], rng);
    let w = random(&[3, 4, 3, 3, 3], rng);
    let (_, cache) = head.forward(&x, Mode::Train)?;
    let gx = head.backward(&cache, &w)?;
    let eval =
        |head: &AttentionHead, x: &Tensor| dot(&head.clone().forward(x, Mode::Train).expect("valid input").0, &w);
    let mut out = vec![check(
        "attention.input",
        &central(x.len(), |i, h| eval(&head, &bumped(&x, i, h))),
        gx.data(),
    )];
    let mut named = Vec::new();
    head.named_params("attention", &mut named);
    let groups: Vec<(String, Vec<f64>)> = named.into_iter().map(|(n, p)| (n, p.grad.clone())).collect();
    for (gi, (name, analytic)) in groups.iter().enumerate() {
        let num = central(analytic.len(), |i, h| {
            let mut probe = head.clone();
            let mut params = Vec::new();
            probe.named_params_mut("attention", &mut params);
            params[gi].1.value.data_mut()[i] += h;
            eval(&probe, &x)
        });
        out.push(check(name, &num, analytic));
    }
    Ok(out)
}

fn layer_checks(dynamic: bool, rng: &mut EngineRng) -> Result<Vec<CheckResult>> {
    let config = LayerConfig {
        kernel: 3,
        in_channels: 3,
        out_channels: 2,
        grid: GridSpec::new(4, 5)?,
        dynamic,
    };
    let prefix = if dynamic { "dgridconv" } else { "gridconv" };
    let mut layer = DGridConvLayer::new(config, BnSettings::default(), rng)?;
    let x = random(&[3, 4, 5, 3], rng);
    let w = random(&[3, 4, 5, 2], rng);
    let (_, cache) = layer.forward(&x, Mode::Train)?;
    let gx = layer.backward(&cache, &w)?;
    let eval =
        |layer: &DGridConvLayer, x: &Tensor| dot(&layer.clone().forward(x, Mode::Train).expect("valid input").0, &w);
    let mut out = vec![check(
        &format!("{prefix}.input"),
        &central(x.len(), |i, h| eval(&layer, &bumped(&x, i, h))),
        gx.data(),
    )];
    let mut named = Vec::new();
    layer.named_params(prefix, &mut named);
    let groups: Vec<(String, Vec<f64>)> = named.into_iter().map(|(n, p)| (n, p.grad.clone())).collect();
    for (gi, (name, analytic)) in groups.iter().enumerate() {
        let num = central(analytic.len(), |i, h| {
            let mut probe = layer.clone();
            let mut params = Vec::new();
            probe.named_params_mut(prefix, &mut params);
            params[gi].1.value.data_mut()[i] += h;
            eval(&probe, &x)
        });
        out.push(check(name, &num, analytic));
    }
    Ok(out)
}

/// The grid transforms with the assignment relaxed to real entries.
fn sgt_checks(rng: &mut EngineRng) -> Result<Vec<CheckResult>> {
    let grid = GridSpec::new(3, 3)?;
    let (n, j, c) = (2, 5, 3);
    let s = random_sgt(j, grid, rng)?;
    let s_real: Vec<f64> = s.entries().iter().map(|&e| e as f64).collect();
    let cells = grid.cells();

    let relaxed_forward = |sv: &[f64], g: &Tensor| {
        Tensor::from_fn(&[n, grid.rows, grid.cols, c], |idx| {
            let (b, p, k) = (idx / (cells * c), (idx / c) % cells, idx % c);
            (0..j).map(|jj| sv[p * j + jj] * g.data()[(b * j + jj) * c + k]).sum()
        })
    };
    let relaxed_inverse = |sv: &[f64], d: &Tensor| {
        Tensor::from_fn(&[n, j, c], |idx| {
            let (b, jj, k) = (idx / (j * c), (idx / c) % j, idx % c);
            let mass: f64 = (0..cells).map(|p| sv[p * j + jj]).sum();
            (0..cells)
                .map(|p| sv[p * j + jj] * d.data()[(b * cells + p) * c + k])
                .sum::<f64>()
                / mass
        })
    };

    let g = random(&[n, j, c], rng);
    let w_grid = random(&[n, grid.rows, grid.cols, c], rng);
    let mut out = Vec::new();
    let analytic = sgt_forward_assignment_grad(&w_grid, &g, &s)?;
    let num = central(s_real.len(), |i, h| {
        dot(&relaxed_forward(&bumped_vec(&s_real, i, h), &g), &w_grid)
    });
    out.push(check("sgt_forward.assignment", &num, &analytic));
    let exact = relaxed_forward(&s_real, &g);
    out.push(CheckResult::measured(
        "sgt_forward.relaxed_matches_discrete",
        exact.max_abs_diff(&sgt_forward(&s, &g)?),
        1e-15,
    ));

    let d = random(&[n, grid.rows, grid.cols, c], rng);
    let w_pose = random(&[n, j, c], rng);
    let pose = sgt_inverse(&s, &d)?;
    let (gd, gs) = sgt_inverse_backward(&s, &d, &pose, &w_pose)?;
    let num = central(d.len(), |i, h| {
        dot(&sgt_inverse(&s, &bumped(&d, i, h)).expect("covering"), &w_pose)
    });
    out.push(check("sgt_inverse.grid", &num, gd.data()));
    let num = central(s_real.len(), |i, h| {
        dot(&relaxed_inverse(&bumped_vec(&s_real, i, h), &d), &w_pose)
    });
    out.push(check("sgt_inverse.assignment", &num, &gs));
    Ok(out)
}

/// Whole-network checks on a tiny lifting model (latent 8, one block) over a batch of four,
/// for a fixed and a learnable assignment. Dropout and Gumbel draws are held fixed by
/// reseeding before every forward pass. The learnable scores are excluded: their
/// gradient is a straight-through surrogate, not a derivative.
pub fn end_to_end_checks() -> Result<Vec<CheckResult>> {
    end_to_end_checks_seeded(E2E_SEED)
}

/// [`end_to_end_checks`] with the model and data drawn from `seed`.
pub fn end_to_end_checks_seeded(seed: u64) -> Result<Vec<CheckResult>> {
    let topology = SkeletonTopology::h36m17();
    let ds = synth_generate(4, &topology, &CameraModel::default(), &SynthConfig::default(), seed)?;
    let data = prepare(&ds, Normalization::Standard)?;
    let (x, y) = data.batch(&[0, 1, 2, 3]);
    let mut out = Vec::new();
    for mode in [SgtMode::Handcrafted, SgtMode::Learnable] {
        let config = GlnConfig {
            latent_channels: 8,
            blocks: 1,
            sgt_mode: mode,
            seed,
            ..GlnConfig::default()
        };
        let mut model = GlnModel::build(&config, &topology)?;
        let loss = |m: &mut GlnModel| -> Result<f64> {
            let (pred, _) = m.forward(&x, Mode::Train, 0, &mut seeded(77))?;
            gln_loss(&pred, &y)
        };
        model.zero_grad();
        let (pred, cache) = model.forward(&x, Mode::Train, 0, &mut seeded(77))?;
        model.backward(&cache, &gln_loss_grad(&pred, &y)?)?;
        let groups: Vec<(String, Vec<f64>)> = model
            .named_params()
            .into_iter()
            .filter(|(n, _)| n != "assignment.scores")
            .map(|(n, p)| (n, p.grad.clone()))
            .collect();
        let tag = if mode == SgtMode::Handcrafted {
            "handcrafted"
        } else {
            "learnable"
        };
        for (gi, (name, analytic)) in groups.iter().enumerate() {
            let mut num = Vec::with_capacity(analytic.len());
            for i in 0..analytic.len() {
                let mut at = |delta: f64| -> Result<f64> {
                    model.named_params_mut()[gi].1.value.data_mut()[i] += delta;
                    let l = loss(&mut model);
                    model.named_params_mut()[gi].1.value.data_mut()[i] -= delta;
                    l
                };
                let (plus, minus) = (at(GRADCHECK_STEP)?, at(-GRADCHECK_STEP)?);
                num.push((plus - minus) / (2.0 * GRADCHECK_STEP));
            }
            out.push(check(&format!("gln.{tag}.{name}"), &num, analytic));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[1.1, 0.0]) - 0.1 / 1.1).abs() < 1e-15);
        assert_eq!(relative_error(&[0.0], &[1e-13]), 1e-13);
    }
}
