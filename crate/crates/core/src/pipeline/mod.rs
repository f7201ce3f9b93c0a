//! Two-stage optimization: SDS-guided deformation and texturing, then joint refinement of
//! Jacobians and texels against a refiner.

mod adam;
mod cameras;
mod config;
mod run;
mod stage1;
mod stage2;

use thiserror::Error;

use crate::render::Camera;

pub use adam::Adam;
pub use cameras::CameraSource;
pub use config::{
    AdamConfig, CameraConfig, GuidanceConfig, InputConfig, OutputConfig, PipelineConfig, ScheduleConfig, Stage1Config,
    Stage2Config, TextureConfig,
};
pub use run::{
    build_provider, load_textured, render_turntable, run_full, run_refine, run_stage1, run_texture, texture_schedule,
    RunReport, StageTimings,
};
pub use stage1::{stage1_deform, stage1_gradient, Stage1Context, Stage1Output, Stage1Step, ViewSample};
pub use stage2::{stage2_gradient, stage2_refine, Stage2Context, Stage2Output, Stage2Step};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Solver(#[from] crate::jacobian::SolverError),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
    #[error(transparent)]
    Texture(#[from] crate::texture::TextureError),
    #[error(transparent)]
    Guidance(#[from] crate::guidance::GuidanceError),
    #[error(transparent)]
    Image(#[from] crate::imaging::ImageError),
    #[error("non-finite {what} in {stage} at iteration {iteration} (camera az={:.4} el={:.4})", camera.azimuth, camera.elevation)]
    NonFinite {
        stage: &'static str,
        what: &'static str,
        iteration: usize,
        camera: Box<Camera>,
    },
    #[error("refiner failed {count} iterations in a row; last error: {last}")]
    RefinerFailures {
        count: usize,
        last: crate::guidance::GuidanceError,
    },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

pub type PipelineResult<T> = Result<T, PipelineError>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}
