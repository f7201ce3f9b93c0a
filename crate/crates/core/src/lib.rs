//! Jacobian-field mesh deformation, differentiable rasterization and multi-view texture
//! painting, driven by a pluggable generative guidance provider.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod guidance;
pub mod imaging;
pub mod jacobian;
pub mod mesh;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod sparse;
pub mod texture;

pub use guidance::{GuidanceError, GuidanceProvider, Tensor};
pub use imaging::{Image, Mask};
pub use jacobian::{JacobianField, PoissonSolver, SolverError};
pub use mesh::{Mesh, MeshError};
pub use pipeline::{PipelineConfig, PipelineError};
pub use render::{Camera, FrameBuffers, RenderError};
pub use texture::{TextureAtlas, TextureError};
