//! CPU splatting renderer: EWA projection, front-to-back alpha compositing
//! and the analytic adjoint of both.

mod backward;
pub mod checkpoint;
mod cloud;
mod project;
mod raster;

pub use backward::{rasterize_backward, CloudGradients};
pub use cloud::{logit, quat_to_matrix, sigmoid, GaussianCloud};
pub use project::{project, project_one, Projected2D, COV2D_REGULARIZER, NEAR_PLANE};
pub use raster::{
    kernel_weight, rasterize, rasterize_with, render_multispectral, Modality, RasterOptions,
    RenderOutput, ALPHA_CAP, KERNEL_RADIUS, TRANSMITTANCE_STOP,
};
