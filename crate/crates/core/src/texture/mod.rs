//! UV atlas, back-projection of view images and the multi-view painting loop.

mod atlas;
mod paint;
mod project;

use thiserror::Error;

pub use atlas::{generate_atlas, BilinearTaps, FillState, TextureAtlas, MIN_RESOLUTION, PATCH_INSET};
pub use paint::{paint, PaintReport, ViewMode, ViewReport, ViewSchedule};
pub use project::{project_view, texel_position, view_masks, ProjectionParams};

#[derive(Debug, Error)]
pub enum TextureError {
    #[error("atlas resolution {got} is too small; at least {required} is required")]
    ResolutionTooSmall { got: usize, required: usize },
    #[error("invalid UVs: {0}")]
    Uv(String),
    #[error("atlas is bound to {atlas} faces but the mesh has {mesh}")]
    Binding { atlas: usize, mesh: usize },
    #[error("{what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error(transparent)]
    Image(#[from] crate::imaging::ImageError),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Guidance(#[from] crate::guidance::GuidanceError),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type TextureResult<T> = Result<T, TextureError>;
