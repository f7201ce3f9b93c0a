//! Software rasterizer with analytic gradients for fixed visibility.

mod backward;
mod camera;
mod export;
mod raster;
mod shade;

use thiserror::Error;

pub use backward::{backprop_pixels, PixelGrads, RenderGradients};
pub use camera::{orbit, sample_camera, Camera, CameraRanges};
pub use export::{depth_to_image, save_buffers};
pub use raster::{decode_normal, encode_normal, rasterize, FrameBuffers};
pub use shade::{shade_textured, Shading};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid render configuration: {0}")]
    Config(String),
    #[error("atlas is bound to {atlas} faces but the mesh has {mesh}")]
    AtlasMismatch { atlas: usize, mesh: usize },
    #[error("{what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error(transparent)]
    Image(#[from] crate::imaging::ImageError),
}

pub type RenderResult<T> = Result<T, RenderError>;
