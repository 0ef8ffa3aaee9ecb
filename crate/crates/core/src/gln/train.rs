use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainHyper;
use super::model::{gln_loss, gln_loss_grad, GlnModel, SgtState};
use crate::data::PreparedData;
use crate::error::{invalid, Error, Result};
use crate::metrics::mpjpe;
use crate::tensor_engine::{AdamHyper, EngineRng, Mode, Tensor};

/// Samples per chunk when predicting a whole dataset.
const EVAL_CHUNK: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the epoch's steps, weighted by batch size.
    pub loss: f64,
    /// Evaluation-mode MPJPE (mm) over the whole training set after the epoch.
    pub train_mpjpe: f64,
    /// Joints with at least one cell in the noise-free assignment after the epoch.
    pub sgt_coverage: usize,
    pub gumbel_noise: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Evaluation-mode MPJPE (mm) before the first update.
    pub initial_mpjpe: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,lr,loss,train_mpjpe,sgt_coverage,gumbel_noise";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.lr, r.loss, r.train_mpjpe, r.sgt_coverage, r.gumbel_noise as u8
            ));
        }
        out
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Evaluation-mode predictions for every sample, in chunks.
pub fn predict_all(model: &mut GlnModel, data: &PreparedData) -> Result<Tensor> {
    let n = data.len();
    let j = data.joints();
    let mut out = Vec::with_capacity(n * j * 3);
    let all: Vec<usize> = (0..n).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let (x, _) = data.batch(chunk);
        out.extend_from_slice(model.predict(&x)?.data());
    }
    Tensor::new(&[n, j, 3], out)
}

/// MPJPE in millimeters of evaluation-mode predictions on `data`.
pub fn evaluate_mpjpe(model: &mut GlnModel, data: &PreparedData) -> Result<f64> {
    let pred = predict_all(model, data)?;
    mpjpe(&data.decode_mm(&pred)?, &data.ground_truth_mm)
}

/// Mini-batch Adam training.
///
/// Each epoch shuffles the sample order with `rng` (a trailing batch smaller than two
/// is dropped), then per step: forward in training mode (Gumbel draws, then dropout
/// draws), loss, backward, and one Adam update of every parameter at the epoch's
/// learning rate. In learnable mode the scores are clamped positive after each update
/// and the last covering noise-free assignment is remembered.
///
/// `on_epoch` sees every record as it is produced.
pub fn train(
    model: &mut GlnModel,
    data: &PreparedData,
    hyper: &TrainHyper,
    rng: &mut EngineRng,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    hyper.validate()?;
    if data.joints() != model.joints() {
        return Err(Error::Incompatible(format!(
            "model has {} joints, data has {}",
            model.joints(),
            data.joints()
        )));
    }
    if data.normalization != model.config.normalization {
        return Err(Error::Incompatible(format!(
            "data prepared with {} normalization, model expects {}",
            data.normalization, model.config.normalization
        )));
    }
    if data.len() < 2 {
        return Err(invalid!("training needs at least two samples"));
    }
    if let SgtState::Learnable(st) = &mut model.sgt {
        st.noise_cutoff_epoch = hyper.gumbel_cutoff;
        st.temperature = hyper.gumbel_temperature;
    }
    let schedule = hyper.schedule(model.config.sgt_mode);
    let mut history = TrainHistory {
        initial_mpjpe: evaluate_mpjpe(model, data)?,
        epochs: Vec::with_capacity(hyper.epochs),
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..hyper.epochs {
        let lr = schedule.lr(hyper.base_lr, epoch);
        let adam = AdamHyper {
            lr,
            beta1: hyper.adam_beta1,
            beta2: hyper.adam_beta2,
            eps: hyper.adam_eps,
        };
        let noise = matches!(&model.sgt, SgtState::Learnable(st) if st.noise_active(epoch));
        order.shuffle(rng);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for (batch, idx) in order.chunks(hyper.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let abort = |msg: String| Error::NumericalAbort { epoch, batch, msg };
            let (x, y) = data.batch(idx);
            model.zero_grad();
            let (pred, cache) = model.forward(&x, Mode::Train, epoch, rng)?;
            let loss = gln_loss(&pred, &y)?;
            if !loss.is_finite() {
                return Err(abort(format!("loss is {loss}")));
            }
            model.backward(&cache, &gln_loss_grad(&pred, &y)?)?;
            for (name, p) in model.named_params_mut() {
                p.apply_adam(&adam).map_err(|e| abort(format!("{name}: {e}")))?;
            }
            if let SgtState::Learnable(st) = &mut model.sgt {
                st.clamp_scores();
                let s = st.argmax_assignment();
                if s.is_covering() {
                    st.last_covering = Some(s);
                }
            }
            loss_sum += loss * idx.len() as f64;
            seen += idx.len();
        }
        let record = EpochRecord {
            epoch,
            lr,
            loss: loss_sum / seen.max(1) as f64,
            train_mpjpe: evaluate_mpjpe(model, data)?,
            sgt_coverage: model.current_assignment().covered_joints(),
            gumbel_noise: noise,
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok(history)
}

/// Writes the history CSV.
pub fn write_history(history: &TrainHistory, path: &std::path::Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(history.to_csv().as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{prepare, synth_generate, CameraModel, Normalization, SynthConfig};
    use crate::gln::{GlnConfig, SgtMode};
    use crate::sgt::SkeletonTopology;
    use crate::tensor_engine::rng::seeded;

    fn small_data(n: usize, normalization: Normalization) -> PreparedData {
        let topo = SkeletonTopology::h36m17();
        let ds = synth_generate(n, &topo, &CameraModel::default(), &SynthConfig::default(), 1).unwrap();
        prepare(&ds, normalization).unwrap()
    }

    fn tiny(mode: SgtMode) -> GlnConfig {
        GlnConfig {
            latent_channels: 8,
            blocks: 1,
            sgt_mode: mode,
            seed: 5,
            ..GlnConfig::default()
        }
    }

    fn hyper(epochs: usize) -> TrainHyper {
        TrainHyper {
            batch_size: 16,
            epochs,
            ..TrainHyper::default()
        }
    }

    #[test]
    fn history_is_reproducible() {
        let data = small_data(40, Normalization::Standard);
        let run = || {
            let mut model = GlnModel::build(&tiny(SgtMode::Learnable), &SkeletonTopology::h36m17()).unwrap();
            let h = train(&mut model, &data, &hyper(3), &mut seeded(2), |_| {}).unwrap();
            (h, model)
        };
        let (a, ma) = run();
        let (b, mb) = run();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(ma, mb);
        assert_eq!(a.epochs.len(), 3);
    }

    #[test]
    fn loss_goes_down_and_lr_follows_schedule() {
        let data = small_data(64, Normalization::Standard);
        let mut model = GlnModel::build(&tiny(SgtMode::Handcrafted), &SkeletonTopology::h36m17()).unwrap();
        let h = train(&mut model, &data, &hyper(4), &mut seeded(3), |_| {}).unwrap();
        assert!(h.epochs[3].loss < h.epochs[0].loss);
        assert_eq!(h.epochs[0].lr, 1e-3);
        assert!((h.epochs[1].lr - 0.00096).abs() < 1e-15);
        assert!(h.epochs.iter().all(|r| r.sgt_coverage == 17 && !r.gumbel_noise));
    }

    #[test]
    fn noise_switches_off_at_cutoff() {
        let data = small_data(8, Normalization::Uvz);
        let mut cfg = tiny(SgtMode::Learnable);
        cfg.normalization = Normalization::Uvz;
        let mut model = GlnModel::build(&cfg, &SkeletonTopology::h36m17()).unwrap();
        let hp = TrainHyper {
            gumbel_cutoff: 2,
            batch_size: 4,
            ..hyper(4)
        };
        let h = train(&mut model, &data, &hp, &mut seeded(1), |_| {}).unwrap();
        let flags: Vec<bool> = h.epochs.iter().map(|r| r.gumbel_noise).collect();
        assert_eq!(flags, vec![true, true, false, false]);
        if let SgtState::Learnable(st) = &model.sgt {
            assert!(st.scores.data().iter().all(|&v| v >= crate::sgt::MIN_SCORE));
        }
    }

    #[test]
    fn mismatched_normalization_is_rejected() {
        let data = small_data(8, Normalization::Uvz);
        let mut model = GlnModel::build(&tiny(SgtMode::Handcrafted), &SkeletonTopology::h36m17()).unwrap();
        assert!(matches!(
            train(&mut model, &data, &hyper(1), &mut seeded(1), |_| {}),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn non_finite_loss_aborts_with_batch() {
        let mut data = small_data(8, Normalization::Standard);
        let j = data.joints();
        data.targets.data_mut()[5 * j * 3] = f64::INFINITY;
        let mut model = GlnModel::build(&tiny(SgtMode::Handcrafted), &SkeletonTopology::h36m17()).unwrap();
        let hp = TrainHyper {
            batch_size: 2,
            ..hyper(1)
        };
        let mut rng = seeded(0);
        let mut order: Vec<usize> = (0..8).collect();
        order.shuffle(&mut seeded(0));
        let expected = order.iter().position(|&i| i == 5).unwrap() / 2;
        match train(&mut model, &data, &hp, &mut rng, |_| {}) {
            Err(Error::NumericalAbort { epoch: 0, batch, .. }) => assert_eq!(batch, expected),
            other => panic!("{other:?}"),
        }
    }
}
