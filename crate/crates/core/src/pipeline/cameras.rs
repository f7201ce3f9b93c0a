use rand::Rng;

use super::config::CameraConfig;
use super::PipelineResult;
use crate::mesh::Mesh;
use crate::render::{sample_camera, Camera, CameraRanges};

/// Where training cameras come from: a random orbit band, or the fixed set a provider knows.
#[derive(Debug, Clone, PartialEq)]
pub enum CameraSource {
    Orbit(CameraRanges),
    Registered(Vec<Camera>),
}

impl CameraSource {
    /// Orbit band around the centroid of `base`, or the provider's cameras when it has any.
    pub fn new(cfg: &CameraConfig, base: &Mesh, size: usize, registered: Option<Vec<Camera>>) -> Self {
        match registered {
            Some(cams) if !cams.is_empty() => Self::Registered(cams),
            _ => Self::Orbit(orbit_ranges(cfg, base, size)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PipelineResult<Camera> {
        match self {
            Self::Orbit(ranges) => Ok(sample_camera(rng, ranges)?),
            Self::Registered(cams) => Ok(cams[rng.gen_range(0..cams.len())].clone()),
        }
    }
}

pub(crate) fn orbit_ranges(cfg: &CameraConfig, base: &Mesh, size: usize) -> CameraRanges {
    let c = base.centroid();
    CameraRanges {
        elevation_min: cfg.elevation_min_deg.to_radians(),
        elevation_max: cfg.elevation_max_deg.to_radians(),
        radius: cfg.radius_scale * base.bounding_radius(),
        fov_y: cfg.fov_y_deg.to_radians(),
        width: size,
        height: size,
        look_at: [c.x, c.y, c.z],
    }
}

/// A camera at the orbit radius looking at the centroid of `base`.
pub(crate) fn template_camera(cfg: &CameraConfig, base: &Mesh, size: usize) -> PipelineResult<Camera> {
    let r = orbit_ranges(cfg, base, size);
    Ok(Camera::new(0.0, 0.0, r.radius, r.fov_y, size, size)?.with_look_at(base.centroid()))
}
