//! Minimal deterministic neural-network toolkit: NHWC tensors, layers with
//! analytic gradients, regularizers, initializers, Adam, finite-difference
//! gradient checking and a flat checkpoint format.

mod activation;
mod adam;
mod batch_norm;
pub mod checkpoint;
mod conv;
mod dense;
pub mod grad_check;
mod init;
mod layer;
mod loss;
mod regularize;
mod rng;
mod tensor;

pub use activation::{activate, activate_backward, Activation};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use batch_norm::{batch_norm, batch_norm_backward, BatchNormCache, BatchNormParams};
pub use conv::{
    conv2d, conv2d_backward, conv2d_transpose, conv2d_transpose_backward, ConvGeometry,
};
pub use dense::{dense, dense_backward};
pub use init::{fan_in, msra_init, normal_init};
pub use layer::{Layer, Mode, NormMode, Sequential, Tape};
pub use loss::bce_loss;
pub use regularize::{dropout, gaussian_noise};
pub use rng::Rng;
pub use tensor::{Scalar, Tensor};
