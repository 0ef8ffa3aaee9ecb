//! Deterministic dense numerics: tensors, the layer primitives the lifting
//! network needs with their hand-derived backward passes, and Adam.

mod activation;
mod adam;
mod affine;
mod conv;
mod dropout;
pub mod gemm;
mod norm;
mod pad;
mod param;
mod pool;
pub mod rng;
mod tensor;

pub use activation::{activation, activation_backward, Activation};
pub use adam::{adam_update, AdamHyper};
pub use affine::{affine, affine_backward};
pub use conv::{col2im, conv2d, conv2d_backward, im2col, kernel_dims};
pub use dropout::{dropout, dropout_backward};
pub use norm::{batch_norm, batch_norm_backward, BatchNormCache, Mode, RunningStats};
pub use pad::{pad_grid, pad_grid_backward, pad_index_map, PadMode};
pub use param::Parameter;
pub use pool::{global_average_pool, global_average_pool_backward};
pub use rng::EngineRng;
pub use tensor::{grid_dims, Tensor};
