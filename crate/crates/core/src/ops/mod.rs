//! Tensor-core primitives: convolutions, sampling, activations and
//! channel/broadcast plumbing. Each forward has a matching backward used by
//! the tape.

pub mod activation;
pub mod broadcast;
pub mod channels;
pub mod conv;
pub mod sample;

pub use activation::{gelu, sigmoid, silu, Activation};
pub use broadcast::{broadcast, reduce, BinaryOp, Reduction};
pub use channels::{concat_channels, slice_channels, split_channels};
pub use conv::{conv2d, conv_out_dim, depthwise_conv2d};
pub use sample::{bilinear_sample, sample_points};
