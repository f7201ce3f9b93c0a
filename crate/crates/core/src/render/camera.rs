use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{RenderError, RenderResult};

/// Orbit camera: a pose on a sphere around `look_at` plus pinhole intrinsics.
///
/// The eye sits at `look_at + radius * (cos(el) sin(az), sin(el), cos(el) cos(az))`, so
/// azimuth 0 / elevation 0 looks down the -z axis. Camera space is right-handed with x
/// right, y up and the view direction along -z. Pixel `(i, j)` has its centre at
/// `(i + 0.5, j + 0.5)`; row 0 is the top of the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub azimuth: f64,
    pub elevation: f64,
    pub radius: f64,
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub look_at: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

impl Camera {
    pub fn new(
        azimuth: f64,
        elevation: f64,
        radius: f64,
        fov_y: f64,
        width: usize,
        height: usize,
    ) -> RenderResult<Self> {
        let cam = Self {
            azimuth: azimuth.rem_euclid(TAU),
            elevation,
            radius,
            fov_y,
            width,
            height,
            look_at: [0.0; 3],
            up: default_up(),
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn with_look_at(mut self, look_at: Vector3<f64>) -> Self {
        self.look_at = [look_at.x, look_at.y, look_at.z];
        self
    }

    pub fn with_resolution(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn validate(&self) -> RenderResult<()> {
        if !(self.fov_y > 0.0 && self.fov_y < PI) {
            return Err(RenderError::InvalidCamera(format!(
                "fov_y {} must lie in (0, pi)",
                self.fov_y
            )));
        }
        if !(self.radius > 0.0) {
            return Err(RenderError::InvalidCamera(format!(
                "radius {} must be positive",
                self.radius
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::InvalidCamera("resolution must be at least 1x1".into()));
        }
        if Vector3::from(self.up).norm() == 0.0 {
            return Err(RenderError::InvalidCamera("up vector is zero".into()));
        }
        Ok(())
    }

    pub fn target(&self) -> Vector3<f64> {
        Vector3::from(self.look_at)
    }

    /// Unit vector from the target toward the eye.
    pub fn view_direction(&self) -> Vector3<f64> {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        Vector3::new(ce * sa, se, ce * ca)
    }

    pub fn eye(&self) -> Vector3<f64> {
        self.target() + self.view_direction() * self.radius
    }

    /// World-to-camera rotation; rows are the camera's right, up and backward axes.
    pub fn rotation(&self) -> Matrix3<f64> {
        let back = self.view_direction();
        let forward = -back;
        let mut up = Vector3::from(self.up).normalize();
        if forward.cross(&up).norm() < 1e-9 {
            // Looking straight along `up`; pick a horizontal up that follows the azimuth.
            let (sa, ca) = self.azimuth.sin_cos();
            up = -Vector3::new(sa, 0.0, ca) * forward.dot(&Vector3::from(self.up)).signum();
        }
        let right = forward.cross(&up).normalize();
        let cam_up = right.cross(&forward);
        Matrix3::from_rows(&[right.transpose(), cam_up.transpose(), back.transpose()])
    }

    pub fn tan_half_fov(&self) -> f64 {
        (0.5 * self.fov_y).tan()
    }

    pub fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }

    /// Near-plane distance; geometry closer than this is not drawn.
    pub fn near(&self) -> f64 {
        1e-3 * self.radius
    }

    /// Camera-space ray through a sub-pixel position, scaled so its z component is -1.
    pub fn ray(&self, px: f64, py: f64) -> Vector3<f64> {
        let t = self.tan_half_fov();
        let ndc_x = 2.0 * px / self.width as f64 - 1.0;
        let ndc_y = 1.0 - 2.0 * py / self.height as f64;
        Vector3::new(ndc_x * t * self.aspect(), ndc_y * t, -1.0)
    }

    /// Screen position `(px, py)` and depth of a camera-space point, `None` behind the near plane.
    pub fn project_camera_space(&self, q: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let depth = -q.z;
        if depth <= self.near() {
            return None;
        }
        let t = self.tan_half_fov();
        let ndc_x = q.x / (depth * t * self.aspect());
        let ndc_y = q.y / (depth * t);
        let px = 0.5 * (ndc_x + 1.0) * self.width as f64;
        let py = 0.5 * (1.0 - ndc_y) * self.height as f64;
        Some((px, py, depth))
    }
}

/// Ranges for random camera sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRanges {
    /// Elevation band in radians.
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub radius: f64,
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    pub look_at: [f64; 3],
}

impl Default for CameraRanges {
    fn default() -> Self {
        Self {
            elevation_min: (-15f64).to_radians(),
            elevation_max: 60f64.to_radians(),
            radius: 2.5,
            fov_y: 45f64.to_radians(),
            width: 64,
            height: 64,
            look_at: [0.0; 3],
        }
    }
}

impl CameraRanges {
    /// Whole-sphere band.
    pub fn full_sphere(radius: f64, fov_y: f64, width: usize, height: usize) -> Self {
        Self {
            elevation_min: -FRAC_PI_2,
            elevation_max: FRAC_PI_2,
            radius,
            fov_y,
            width,
            height,
            look_at: [0.0; 3],
        }
    }
}

/// Draws a camera with azimuth uniform on `[0, 2pi)` and elevation distributed so poses are
/// uniform over the spherical band (`sin(elevation)` uniform).
pub fn sample_camera<R: Rng + ?Sized>(rng: &mut R, ranges: &CameraRanges) -> RenderResult<Camera> {
    let (lo, hi) = (ranges.elevation_min, ranges.elevation_max);
    if !(lo <= hi) || lo < -FRAC_PI_2 || hi > FRAC_PI_2 {
        return Err(RenderError::Config(format!(
            "elevation band [{lo}, {hi}] is empty or outside [-pi/2, pi/2]"
        )));
    }
    let azimuth = rng.gen::<f64>() * TAU;
    let u: f64 = rng.gen();
    let elevation = if lo == hi {
        lo
    } else {
        let (s0, s1) = (lo.sin(), hi.sin());
        (s0 + u * (s1 - s0)).clamp(-1.0, 1.0).asin()
    };
    let cam = Camera::new(
        azimuth,
        elevation,
        ranges.radius,
        ranges.fov_y,
        ranges.width,
        ranges.height,
    )?
    .with_look_at(Vector3::from(ranges.look_at));
    Ok(cam)
}

/// `count` cameras evenly spaced in azimuth at one elevation.
pub fn orbit(count: usize, elevation: f64, template: &Camera) -> Vec<Camera> {
    (0..count)
        .map(|i| Camera {
            azimuth: TAU * i as f64 / count as f64,
            elevation,
            ..template.clone()
        })
        .collect()
}
