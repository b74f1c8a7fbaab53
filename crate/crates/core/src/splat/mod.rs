//! Differentiable splatting of 3D Gaussians onto the antenna's
//! (azimuth, elevation) hemisphere.

mod checkpoint;
mod gaussian;
mod loss;
mod project;
mod raster;

pub use checkpoint::{Checkpoint, SectionInfo, Sidecar, Tensor};
pub use gaussian::{
    logit, rotation_matrix, rotation_matrix_vjp, sigmoid, GaussianPrimitive, GaussianSet, SetTag, PARAMS_PER_GAUSSIAN,
};
pub use loss::{loss, loss_with, ssim, ssim_with_grad, LossValue, LAMBDA_SSIM};
pub use project::{
    direction_jacobian, direction_jacobian_vjp, project_backward, project_to_pas, project_with_beam, Projected,
    ProjectionGrad, COV_REG_PX2, MIN_DEPTH_M, PX_PER_RAD,
};
pub use raster::{
    footprint, rasterize, rasterize_backward, wrap_az, GaussianGrad, RenderInput, SetGradient, SplatGradients,
    SplatWorkspace, CUTOFF_Q, TILE, TILES_X, TILES_Y,
};
