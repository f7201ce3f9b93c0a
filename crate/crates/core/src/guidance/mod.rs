//! Guidance providers: the SDS machinery, offline oracles and the HTTP bridge client.

mod latent;
mod mock;
mod oracle;
mod remote;
mod sds;
mod tensor;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::Camera;

pub use latent::{latent_to_normals_adjoint, normals_to_latent, PAD_VALUE};
pub use mock::{DenoiseMock, MockProvider};
pub use oracle::{AnalyticOracle, TargetScene, TargetSource, TargetView};
pub use remote::{RemoteOptions, RemoteProvider};
pub use sds::{add_noise, sample_noise, sds_gradient, NoiseSchedule, SdsConfig, SdsSample, WeightMode};
pub use tensor::{Tensor, WireTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Capability {
    #[serde(rename = "denoise")]
    Denoise,
    #[serde(rename = "depth2img", alias = "depthToImage")]
    DepthToImage,
    #[serde(rename = "inpaint")]
    Inpaint,
    #[serde(rename = "refine")]
    Refine,
}

impl Capability {
    pub const ALL: [Capability; 4] = [
        Capability::Denoise,
        Capability::DepthToImage,
        Capability::Inpaint,
        Capability::Refine,
    ];
}

impl std::fmt::Display for Capability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Capability::Denoise => "denoise",
            Capability::DepthToImage => "depth2img",
            Capability::Inpaint => "inpaint",
            Capability::Refine => "refine",
        })
    }
}

/// Latent grid a provider denoises: `h x w x c`, row-major, channels last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentSpec {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl LatentSpec {
    pub fn shape(&self) -> Vec<usize> {
        vec![self.h, self.w, self.c]
    }
}

impl Default for LatentSpec {
    fn default() -> Self {
        Self { h: 64, w: 64, c: 4 }
    }
}

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("provider does not support {0}")]
    Unsupported(Capability),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid guidance configuration: {0}")]
    Config(String),
    #[error("protocol error in field `{field}`: {message}")]
    Protocol { field: String, message: String },
    #[error("request failed{}: {message}", status.map(|s| format!(" with HTTP {s}")).unwrap_or_default())]
    Http { status: Option<u16>, message: String },
    #[error("no target registered for camera {0}")]
    UnknownCamera(String),
    #[error("request lacks the `{0}` hint this provider needs")]
    MissingHint(&'static str),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<GuidanceError>,
    },
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
    #[error(transparent)]
    Image(#[from] crate::imaging::ImageError),
}

impl GuidanceError {
    pub fn context(self, context: impl Into<String>) -> Self {
        GuidanceError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &GuidanceError {
        match self {
            GuidanceError::Context { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type GuidanceResult<T> = Result<T, GuidanceError>;

/// In-process side information for test doubles. A real model ignores it; the wire format
/// carries it as optional extra keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleHints {
    pub camera: Option<Camera>,
    /// Clean latent before noising.
    pub clean: Option<Tensor>,
    /// Noise that was added.
    pub noise: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseRequest {
    /// Noised latent `x_t`.
    pub latent: Tensor,
    pub t: usize,
    pub prompt: String,
    pub guidance_scale: f64,
    pub hints: OracleHints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthRequest {
    /// `H x W x 1` grayscale depth, near = bright.
    pub depth: Tensor,
    pub prompt: String,
    pub hints: OracleHints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintRequest {
    /// `H x W x 3` current render.
    pub image: Tensor,
    /// `H x W x 1`, 1 where new content is wanted.
    pub mask: Tensor,
    pub depth: Option<Tensor>,
    pub prompt: String,
    pub hints: OracleHints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineRequest {
    pub image: Tensor,
    pub prompt: String,
    pub steps: usize,
    pub hints: OracleHints,
}

/// Source of generative guidance. Every method returns a tensor; images are `H x W x 3`.
pub trait GuidanceProvider: Send + Sync {
    fn capabilities(&self) -> Vec<Capability>;

    fn latent_spec(&self) -> LatentSpec;

    /// Cameras the provider has targets for, when it only knows a fixed set.
    fn registered_cameras(&self) -> Option<Vec<Camera>> {
        None
    }

    fn denoise(&self, _req: &DenoiseRequest) -> GuidanceResult<Tensor> {
        Err(GuidanceError::Unsupported(Capability::Denoise))
    }

    fn depth_to_image(&self, _req: &DepthRequest) -> GuidanceResult<Tensor> {
        Err(GuidanceError::Unsupported(Capability::DepthToImage))
    }

    fn inpaint(&self, _req: &InpaintRequest) -> GuidanceResult<Tensor> {
        Err(GuidanceError::Unsupported(Capability::Inpaint))
    }

    fn refine(&self, _req: &RefineRequest) -> GuidanceResult<Tensor> {
        Err(GuidanceError::Unsupported(Capability::Refine))
    }

    fn require(&self, cap: Capability) -> GuidanceResult<()> {
        if self.capabilities().contains(&cap) {
            Ok(())
        } else {
            Err(GuidanceError::Unsupported(cap))
        }
    }
}
