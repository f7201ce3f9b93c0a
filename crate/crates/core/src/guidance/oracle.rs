use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use super::{
    normals_to_latent, Capability, DenoiseRequest, DepthRequest, GuidanceError, GuidanceProvider, GuidanceResult,
    InpaintRequest, LatentSpec, OracleHints, RefineRequest, Tensor,
};
use crate::imaging::Image;
use crate::mesh::Mesh;
use crate::render::{rasterize, shade_textured, Camera, Shading};
use crate::texture::TextureAtlas;

/// Stored target for one camera.
#[derive(Debug, Clone)]
pub struct TargetView {
    pub camera: Camera,
    pub color: Image,
    /// Encoded normal map; needed only for denoising.
    pub normal: Option<Image>,
}

/// A reference scene rendered on demand for any camera.
#[derive(Debug, Clone)]
pub struct TargetScene {
    pub mesh: Mesh,
    pub atlas: Option<TextureAtlas>,
    pub shading: Shading,
}

#[derive(Debug, Clone)]
pub enum TargetSource {
    Views(Vec<TargetView>),
    Scene(Box<TargetScene>),
}

/// Offline provider steering every request toward known targets.
///
/// Denoising returns `eps + lambda (x - z)` where `x` is the clean latent and `z` the target
/// normal map's latent, so the SDS gradient is proportional to `x - z`. Image requests return
/// the target colour image; inpainting pastes it into the generate mask only. With
/// `wire_precision` set (the default) inputs and outputs are rounded to `f32` so results match
/// a bridge running the same oracle.
#[derive(Debug, Clone)]
pub struct AnalyticOracle {
    source: TargetSource,
    latent: LatentSpec,
    pub lambda: f64,
    pub wire_precision: bool,
}

fn cameras_match(a: &Camera, b: &Camera) -> bool {
    let tol = 1e-6;
    let dang = |x: f64, y: f64| {
        let d = (x - y).rem_euclid(TAU);
        d.min(TAU - d)
    };
    a.width == b.width
        && a.height == b.height
        && dang(a.azimuth, b.azimuth) < tol
        && (a.elevation - b.elevation).abs() < tol
        && (a.radius - b.radius).abs() < tol * a.radius.max(1.0)
        && (a.fov_y - b.fov_y).abs() < tol
        && a.look_at.iter().zip(&b.look_at).all(|(x, y)| (x - y).abs() < tol)
}

fn describe(c: &Camera) -> String {
    format!(
        "az={:.6} el={:.6} r={:.6} fov={:.6} {}x{}",
        c.azimuth, c.elevation, c.radius, c.fov_y, c.width, c.height
    )
}

impl AnalyticOracle {
    pub fn new(source: TargetSource, latent: LatentSpec) -> Self {
        Self {
            source,
            latent,
            lambda: 1.0,
            wire_precision: true,
        }
    }

    /// Skips all `f32` rounding; used for finite-difference checks.
    pub fn exact(mut self) -> Self {
        self.wire_precision = false;
        self
    }

    fn round(&self, t: Tensor) -> Tensor {
        if self.wire_precision {
            t.to_f32_precision()
        } else {
            t
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn from_scene(scene: TargetScene, latent: LatentSpec) -> Self {
        Self::new(TargetSource::Scene(Box::new(scene)), latent)
    }

    pub fn source(&self) -> &TargetSource {
        &self.source
    }

    fn camera<'a>(&self, hints: &'a OracleHints) -> GuidanceResult<&'a Camera> {
        hints.camera.as_ref().ok_or(GuidanceError::MissingHint("camera"))
    }

    fn view(&self, camera: &Camera) -> GuidanceResult<&TargetView> {
        match &self.source {
            TargetSource::Views(views) => views
                .iter()
                .find(|v| cameras_match(&v.camera, camera))
                .ok_or_else(|| GuidanceError::UnknownCamera(describe(camera))),
            TargetSource::Scene(_) => unreachable!("scene targets are rendered"),
        }
    }

    pub fn target_color(&self, camera: &Camera) -> GuidanceResult<Image> {
        let img = match &self.source {
            TargetSource::Views(_) => self.view(camera)?.color.clone(),
            TargetSource::Scene(scene) => {
                let fb = rasterize(&scene.mesh, camera);
                match &scene.atlas {
                    Some(atlas) => shade_textured(&fb, &scene.mesh, atlas, &scene.shading)?,
                    None => fb.color,
                }
            }
        };
        Ok(if self.wire_precision {
            img.to_f32_precision()
        } else {
            img
        })
    }

    /// Encoded target normals at full precision.
    pub fn target_normals(&self, camera: &Camera) -> GuidanceResult<Image> {
        let img = match &self.source {
            TargetSource::Views(_) => self
                .view(camera)?
                .normal
                .clone()
                .ok_or_else(|| GuidanceError::UnknownCamera(format!("{} (no normal target)", describe(camera))))?,
            TargetSource::Scene(scene) => rasterize(&scene.mesh, camera).normal,
        };
        Ok(img)
    }

    fn checked_color(&self, camera: &Camera, shape: &[usize]) -> GuidanceResult<Tensor> {
        let t = Tensor::from_image(&self.target_color(camera)?);
        t.ensure_shape("target image", shape)?;
        Ok(t)
    }

    /// Loads `targets/<i>.png`, `cameras.json` and, when present, `normals/<i>.png`.
    pub fn load_dir(dir: &Path, latent: LatentSpec) -> GuidanceResult<Self> {
        let io = |e: std::io::Error| GuidanceError::Config(format!("{}: {e}", dir.display()));
        let text = fs::read_to_string(dir.join("cameras.json")).map_err(io)?;
        let cameras: Vec<Camera> = serde_json::from_str(&text).map_err(|e| GuidanceError::Protocol {
            field: "cameras.json".into(),
            message: e.to_string(),
        })?;
        let mut views = Vec::with_capacity(cameras.len());
        for (i, camera) in cameras.into_iter().enumerate() {
            camera.validate()?;
            let color = Image::load_png_rgb(&dir.join("targets").join(format!("{i}.png")))?;
            let normal_path = dir.join("normals").join(format!("{i}.png"));
            let normal = if normal_path.exists() {
                Some(Image::load_png_rgb(&normal_path)?)
            } else {
                None
            };
            if color.width != camera.width || color.height != camera.height {
                return Err(GuidanceError::Shape(format!(
                    "target {i} is {}x{} but its camera renders {}x{}",
                    color.width, color.height, camera.width, camera.height
                )));
            }
            views.push(TargetView { camera, color, normal });
        }
        Ok(Self::new(TargetSource::Views(views), latent))
    }

    /// Writes the layout read by [`load_dir`](Self::load_dir).
    pub fn save_views(views: &[TargetView], dir: &Path) -> GuidanceResult<()> {
        let io = |e: std::io::Error| GuidanceError::Config(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir.join("targets")).map_err(io)?;
        let cameras: Vec<&Camera> = views.iter().map(|v| &v.camera).collect();
        fs::write(
            dir.join("cameras.json"),
            serde_json::to_string_pretty(&cameras).unwrap(),
        )
        .map_err(io)?;
        for (i, v) in views.iter().enumerate() {
            v.color.save_png(&dir.join("targets").join(format!("{i}.png")))?;
            if let Some(n) = &v.normal {
                fs::create_dir_all(dir.join("normals")).map_err(io)?;
                n.save_png(&dir.join("normals").join(format!("{i}.png")))?;
            }
        }
        Ok(())
    }
}

impl GuidanceProvider for AnalyticOracle {
    fn capabilities(&self) -> Vec<Capability> {
        Capability::ALL.to_vec()
    }

    fn latent_spec(&self) -> LatentSpec {
        self.latent
    }

    fn registered_cameras(&self) -> Option<Vec<Camera>> {
        match &self.source {
            TargetSource::Views(v) => Some(v.iter().map(|v| v.camera.clone()).collect()),
            TargetSource::Scene(_) => None,
        }
    }

    fn denoise(&self, req: &DenoiseRequest) -> GuidanceResult<Tensor> {
        let camera = self.camera(&req.hints)?;
        let clean = req
            .hints
            .clean
            .as_ref()
            .ok_or(GuidanceError::MissingHint("clean latent"))?;
        let noise = req.hints.noise.as_ref().ok_or(GuidanceError::MissingHint("noise"))?;
        clean.ensure_shape("clean latent", &req.latent.shape)?;
        noise.ensure_shape("noise", &req.latent.shape)?;
        let target = self.round(normals_to_latent(&self.target_normals(camera)?, &self.latent)?);
        target.ensure_shape("target latent", &req.latent.shape)?;
        let r = |v: f64| if self.wire_precision { v as f32 as f64 } else { v };
        let data = clean
            .data
            .iter()
            .zip(&noise.data)
            .zip(&target.data)
            .map(|((&x, &e), &z)| r(e) + self.lambda * (r(x) - z))
            .collect();
        Ok(self.round(Tensor {
            shape: req.latent.shape.clone(),
            data,
        }))
    }

    fn depth_to_image(&self, req: &DepthRequest) -> GuidanceResult<Tensor> {
        let camera = self.camera(&req.hints)?;
        let [h, w, ..] = req.depth.shape[..] else {
            return Err(GuidanceError::Shape(format!("depth tensor {:?}", req.depth.shape)));
        };
        self.checked_color(camera, &[h, w, 3])
    }

    fn inpaint(&self, req: &InpaintRequest) -> GuidanceResult<Tensor> {
        let mask = req.mask.to_mask()?;
        if mask.count() == 0 {
            return Ok(self.round(req.image.clone()));
        }
        let camera = self.camera(&req.hints)?;
        let target = self.checked_color(camera, &req.image.shape)?;
        let mut out = req.image.clone();
        for (p, &m) in mask.data.iter().enumerate() {
            if m {
                out.data[3 * p..3 * p + 3].copy_from_slice(&target.data[3 * p..3 * p + 3]);
            }
        }
        Ok(self.round(out))
    }

    fn refine(&self, req: &RefineRequest) -> GuidanceResult<Tensor> {
        let camera = self.camera(&req.hints)?;
        self.checked_color(camera, &req.image.shape)
    }
}
