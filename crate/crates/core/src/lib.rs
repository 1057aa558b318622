//! Feed-forward 3D Gaussian splatting with a learned scene codec.
//!
//! Posed context views are turned into a dense Gaussian-generation feature,
//! compressed with a rate-conditioned hyperprior codec into a self-contained
//! `.csplat` bitstream, and decoded back into pixel-aligned 3D Gaussians that
//! can be rendered from novel viewpoints.

pub mod backbone;
pub mod bundle;
pub mod cli;
pub mod codec;
pub mod coder;
pub mod error;
pub mod gaussians;
pub mod geometry;
pub mod model;
pub mod pipeline;
pub mod tensors;
pub mod training;

pub use error::{Error, Result};
