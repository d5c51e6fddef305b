//! Layer kernels recorded on the autodiff tape, and the parameterized
//! layers built from them.

pub mod activation;
pub mod conv;
pub mod layers;
pub mod loss;
pub mod norm;
pub mod pool;

pub use conv::ConvGeometry;
pub use layers::{
    count_parameters, BatchNorm2d, BatchNorm2dParams, Conv2d, Conv2dParams, Linear, Module, ResidualBlock, SqueezeExcite, TensorKind,
};
pub use loss::{argmax, probabilities, softmax, softmax_row};
pub use norm::BatchStats;
pub use pool::PoolGeometry;
