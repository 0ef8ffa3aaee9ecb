//! Fixtures shared by the benchmarks.

use gridlift::gridconv::{BnSettings, DGridConvLayer, LayerConfig};
use gridlift::sgt::GridSpec;
use gridlift::tensor_engine::rng::seeded;
use gridlift::tensor_engine::Tensor;

/// A square layer on the 5x5 grid with `channels` in and out.
pub fn layer(kernel: usize, channels: usize, dynamic: bool) -> DGridConvLayer {
    let config = LayerConfig {
        kernel,
        in_channels: channels,
        out_channels: channels,
        grid: GridSpec::default(),
        dynamic,
    };
    DGridConvLayer::new(config, BnSettings::default(), &mut seeded(7)).expect("valid layer config")
}

/// A deterministic `[batch,5,5,channels]` grid pose.
pub fn grid_input(batch: usize, channels: usize) -> Tensor {
    Tensor::from_fn(&[batch, 5, 5, channels], |i| (i as f64 * 0.37).sin())
}
