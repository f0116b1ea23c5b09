//! Minimal reverse-mode autograd over dense NCHW tensors.
//!
//! Built for per-image optimization (deep image prior) and small
//! convolutional regressors on CPU. Every op is generic over [`Real`] so the
//! same network code runs in `f32` for speed and `f64` for gradient checks.

mod graph;
mod optim;
mod params;
pub mod par;
mod real;
mod tensor;

pub mod ops {
    pub mod conv;
    pub mod elementwise;
    pub mod norm;
    pub mod resample;
}

pub use graph::{Gradients, Graph, Var};
pub use ops::conv::{conv2d_forward, reflect_index, Conv2dSpec, Padding};
pub use ops::norm::{BatchStats, BN_EPS};
pub use ops::resample::{resample_adjoint, resample_forward, AxisMap};
pub use optim::{Adam, AdamConfig};
pub use params::{uniform_fan_in, ParamId, ParamStore};
pub use real::{gemm, Mat, Real};
pub use tensor::Tensor;
