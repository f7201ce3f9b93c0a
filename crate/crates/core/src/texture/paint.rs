use std::path::Path;

use serde::{Deserialize, Serialize};

use super::atlas::TextureAtlas;
use super::project::{project_view, view_masks, ProjectionParams};
use super::{TextureError, TextureResult};
use crate::guidance::{DepthRequest, GuidanceProvider, InpaintRequest, OracleHints, Tensor};
use crate::imaging::Image;
use crate::mesh::Mesh;
use crate::render::{depth_to_image, rasterize, shade_textured, Camera, Shading};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ViewMode {
    DepthInit,
    Inpaint,
}

/// Ordered painting viewpoints; the first view is generated from depth, the rest inpainted.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSchedule {
    cameras: Vec<Camera>,
}

impl ViewSchedule {
    pub fn new(cameras: Vec<Camera>) -> TextureResult<Self> {
        if cameras.is_empty() {
            return Err(TextureError::Schedule("view schedule is empty".into()));
        }
        Ok(Self { cameras })
    }

    /// Eight views every 45 degrees of azimuth at alternating +-15 degrees elevation, then
    /// one view from above and one from below.
    pub fn default_ring(template: &Camera) -> Self {
        Self::ring(template, 10)
    }

    /// `count - 2` views evenly spaced in azimuth at alternating +-15 degrees elevation plus
    /// top and bottom views at +-80 degrees. Below three views only the ring is used.
    pub fn ring(template: &Camera, count: usize) -> Self {
        let around = if count >= 3 { count - 2 } else { count.max(1) };
        let step = 360.0 / around as f64;
        let mut cameras: Vec<Camera> = (0..around)
            .map(|k| Camera {
                azimuth: (step * k as f64).to_radians(),
                elevation: if k % 2 == 0 { 15f64 } else { -15f64 }.to_radians(),
                ..template.clone()
            })
            .collect();
        if count >= 3 {
            for el in [80f64, -80f64] {
                cameras.push(Camera {
                    azimuth: 0.0,
                    elevation: el.to_radians(),
                    ..template.clone()
                });
            }
        }
        Self { cameras }
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn mode(&self, view: usize) -> ViewMode {
        if view == 0 {
            ViewMode::DepthInit
        } else {
            ViewMode::Inpaint
        }
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewReport {
    pub mode: ViewMode,
    pub texels_updated: usize,
    /// Pixels sent for generation.
    pub generated_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaintReport {
    pub views: Vec<ViewReport>,
    pub coverage: f64,
}

fn image_tensor(t: Tensor, what: &'static str, like: &Image) -> TextureResult<Image> {
    let img = t.to_image()?;
    if img.width != like.width || img.height != like.height || img.channels != 3 {
        return Err(TextureError::ShapeMismatch {
            what,
            expected: format!("{}x{}x3", like.width, like.height),
            got: format!("{}x{}x{}", img.width, img.height, img.channels),
        });
    }
    Ok(img)
}

/// Paints `atlas` view by view. On a guidance failure the partial atlas is written to
/// `checkpoint_dir` (when given) before the error is returned.
pub fn paint(
    mesh: &Mesh,
    atlas: &mut TextureAtlas,
    schedule: &ViewSchedule,
    provider: &dyn GuidanceProvider,
    prompt: &str,
    params: &ProjectionParams,
    checkpoint_dir: Option<&Path>,
) -> TextureResult<PaintReport> {
    atlas.check_binding(mesh)?;
    let mut views = Vec::with_capacity(schedule.len());
    for (i, camera) in schedule.cameras().iter().enumerate() {
        let fb = rasterize(mesh, camera);
        let depth = Tensor::from_image(&depth_to_image(&fb));
        let hints = OracleHints {
            camera: Some(camera.clone()),
            ..Default::default()
        };
        let mode = schedule.mode(i);
        let (result, generated) = match mode {
            ViewMode::DepthInit => {
                let req = DepthRequest {
                    depth,
                    prompt: prompt.to_string(),
                    hints,
                };
                (provider.depth_to_image(&req), fb.mask.count())
            }
            ViewMode::Inpaint => {
                let render = shade_textured(&fb, mesh, atlas, &Shading::unlit())?;
                let (generate, _keep) = view_masks(atlas, mesh, &fb)?;
                let req = InpaintRequest {
                    image: Tensor::from_image(&render),
                    mask: Tensor::from_mask(&generate),
                    depth: Some(depth),
                    prompt: prompt.to_string(),
                    hints,
                };
                (provider.inpaint(&req), generate.count())
            }
        };
        let image = match result {
            Ok(t) => image_tensor(t, "guidance image", &fb.color)?,
            Err(e) => {
                if let Some(dir) = checkpoint_dir {
                    atlas.save_checkpoint(dir, "atlas_partial")?;
                }
                return Err(TextureError::Guidance(e.context(format!("painting view {i}"))));
            }
        };
        let texels_updated = project_view(atlas, mesh, &image, &fb, params)?;
        log::info!(
            "view {i} ({mode:?}): {generated} pixels generated, {texels_updated} texels updated, coverage {:.4}",
            atlas.coverage_fraction()
        );
        views.push(ViewReport {
            mode,
            texels_updated,
            generated_pixels: generated,
        });
    }
    Ok(PaintReport {
        views,
        coverage: atlas.coverage_fraction(),
    })
}
