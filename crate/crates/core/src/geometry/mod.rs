//! Cameras, projection, depth-guided cross-view warping and the normalized
//! inverse-depth parameterization.

mod camera;
mod depth;
mod warp;

pub use camera::{
    rotation_yaw_pitch, scene_dims, Camera, ContextView, Intrinsics, Mat3, Projection, Vec3, IDENTITY,
};
pub use depth::{
    denormalize, denormalize_depth, norm_depth_l1, normalize, normalize_inverse_depth, DepthDomain, DepthMap,
    MetricDepth, NormDepth,
};
pub(crate) use warp::mul_plane;
pub use warp::{aligned_feature, backproject_depth, reproject, warp_to_reference};
