//! Dense tensors with a small reverse-mode differentiation engine.

mod checkpoint;
mod conv;
mod elementwise;
pub mod gradcheck;
mod graph;
pub mod layers;
pub(crate) mod linalg;
mod optim;
mod param;
mod real;
mod sample;
mod shape_ops;
mod special;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub(crate) use elementwise::softplus;
pub use graph::{Gradients, Graph, Var};
pub use layers::{scale_param, Conv2d, Linear, Upconv, LEAKY_SLOPE};
pub use optim::{adamw_update, AdamW, AdamWConfig};
pub use param::{fan_in_uniform, ParamGroup, ParamId, ParamStore, Parameter};
pub use real::Real;
pub use special::{interval_mass, normal_cdf, normal_pdf};
pub use tensor::Tensor;
