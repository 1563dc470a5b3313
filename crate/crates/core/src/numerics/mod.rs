//! Tensors, reverse-mode differentiation and the kernels the model is built from.

mod adam;
mod attention;
mod conv;
mod functional;
pub mod gradcheck;
mod graph;
mod ops;
mod params;
mod sampling;
mod tensor;

pub use adam::{adam_step, Adam, AdamHyper, AdamState};
pub use attention::{masked_mha, AttentionConfig};
pub use functional::{layer_norm, sinusoidal, sinusoidal_2d, softmax};
pub use graph::{Graph, Precision, Var, VjpCtx};
pub use ops::sigmoid;
pub use params::{Init, ParamStore};
pub use sampling::bilinear_sample;
pub use tensor::{Tensor, DIPT_MAGIC, DIPT_VERSION};

