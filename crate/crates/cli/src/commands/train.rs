use std::path::PathBuf;

use gridlift::data::{load_dataset, prepare};
use gridlift::gln::{predict_all, save_model, train, write_history, GlnModel};
use gridlift::metrics::{metric_report, Alignment};
use gridlift::tensor_engine::rng::seeded;

use crate::config::{write_json, RunConfig};
use crate::failure::{at_path, emit_stdout, CmdResult};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Run config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides both the run seed and the model initialization seed.
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(a: Args) -> CmdResult {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(out) = a.out {
        cfg.out_dir = out;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
        cfg.model.seed = seed;
    }
    let cfg = cfg.resolved();
    cfg.model.validate()?;
    cfg.training.validate()?;
    let topology = cfg.topology()?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("resolved_config.json"), &cfg)?;

    let dataset = at_path(&cfg.train_data, load_dataset(&cfg.train_data, &topology))?;
    let data = prepare(&dataset, cfg.model.normalization)?;
    let mut model = GlnModel::build(&cfg.model, &topology)?;
    let mut rng = seeded(cfg.seed);
    eprintln!(
        "training {} parameters on {} samples for {} epochs",
        model.param_count(),
        data.len(),
        cfg.training.epochs
    );
    let history = train(&mut model, &data, &cfg.training, &mut rng, |r| {
        eprintln!(
            "epoch {:>3}  lr {:.3e}  loss {:.6}  train_mpjpe {:.2} mm  coverage {}/{}{}",
            r.epoch,
            r.lr,
            r.loss,
            r.train_mpjpe,
            r.sgt_coverage,
            topology.num_joints(),
            if r.gumbel_noise { "  noise" } else { "" }
        )
    })?;
    save_model(&model, &cfg.out_dir.join("model.ckpt"))?;
    write_history(&history, &cfg.out_dir.join("history.csv"))?;

    if let Some(path) = &cfg.eval_data {
        let held_out = at_path(path, load_dataset(path, &topology))?;
        let held_out = prepare(&held_out, cfg.model.normalization)?;
        let pred = held_out.decode_mm(&predict_all(&mut model, &held_out)?)?;
        let report = metric_report(&pred, &held_out.ground_truth_mm, Alignment::default())?;
        write_json(&cfg.out_dir.join("eval_metrics.json"), &report)?;
    }
    emit_stdout(&format!("{}\n", cfg.out_dir.display()))
}
