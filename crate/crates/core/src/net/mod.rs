//! Small deterministic neural-network engine with exact reverse-mode gradients.

mod adam;
mod gradcheck;
mod layers;
mod loss;
mod network;
mod resize;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{check_gradient, finite_diff_check, relative_error};
pub use layers::{sigmoid, softmax, Layer, LayerSpec};
pub use loss::{binary_cross_entropy, categorical_cross_entropy, PROB_CLAMP};
pub use network::{Network, Tape};
pub use resize::{
    concat_channels, interpolation_matrix, resize_bilinear, resize_bilinear_backward,
    split_channels,
};
pub use tensor::Tensor;
