//! Dense linear algebra and differentiable layers.

pub mod gradcheck;
pub mod layers;
pub mod matrix;
pub mod params;

pub use gradcheck::{compare_grads, finite_difference_grad, relative_error};
pub use layers::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, dropout, dropout_mask,
    masked_softmax, relu, relu_backward, softmax, softmax_backward, tanh_elementwise, ConvShape,
    Mode,
};
pub use matrix::{dot, l2_norm, matmul, matmul_nt, matmul_tn, Matrix};
pub use params::ParamStore;
