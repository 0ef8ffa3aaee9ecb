//! The lifting network: joints placed on the grid, an expanding grid layer, residual
//! blocks, a shrinking grid layer, and read-back to joints; plus its loss, training
//! loop and checkpoints.

mod checkpoint;
mod config;
mod model;
mod train;

pub use checkpoint::{load_model, load_model_for, save_model};
pub use config::{GlnConfig, KernelPlan, LrSchedule, SgtMode, TrainHyper};
pub use model::{
    gln_loss, gln_loss_grad, param_breakdown, GlnCache, GlnModel, GridLayer, GridLayerCache, ParamBreakdown,
    ResidualBlock, SgtState, INPUT_CHANNELS, OUTPUT_CHANNELS,
};
pub use train::{evaluate_mpjpe, predict_all, train, write_history, EpochRecord, TrainHistory};
