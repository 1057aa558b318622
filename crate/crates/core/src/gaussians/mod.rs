//! Decoder-side Gaussian generation, splatting and image metrics.

mod dual;
mod heads;
pub mod io;
pub mod metrics;
mod render;
mod set;

pub use heads::{activate, map_2d_to_3d, merge, AttrMaps, DepthHead, GaussianVars, GsHead, ATTR_CHANNELS, HEAD_HIDDEN};
pub use render::{rotation_from_quaternion, ProjectedGaussians, RenderOutput, RenderSettings, MAX_ALPHA};
pub use set::{render, GaussianSet};
