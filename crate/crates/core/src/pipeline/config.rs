use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, PipelineResult};
use crate::guidance::{LatentSpec, NoiseSchedule, SdsConfig};
use crate::render::Shading;

/// Full run configuration. Every section and key has a default except `input.mesh`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; `None` uses every logical core.
    pub threads: Option<usize>,
    pub input: InputConfig,
    pub stage1: Stage1Config,
    pub texture: TextureConfig,
    pub stage2: Stage2Config,
    pub guidance: GuidanceConfig,
    pub cameras: CameraConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub mesh: PathBuf,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct Stage1Config {
    pub enabled: bool,
    pub iterations: usize,
    pub lr_jacobians: f64,
    pub views_per_iteration: usize,
    /// Square normal-map resolution.
    pub render_size: usize,
    pub latent: LatentSpec,
    pub sds: SdsConfig,
    pub optimizer: AdamConfig,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            enabled: true,
            iterations: 600,
            lr_jacobians: 2e-3,
            views_per_iteration: 12,
            render_size: 64,
            latent: LatentSpec::default(),
            sds: SdsConfig::default(),
            optimizer: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct TextureConfig {
    pub enabled: bool,
    pub resolution: usize,
    pub render_size: usize,
    pub views: usize,
    pub blend_exponent: f64,
    pub depth_tolerance: f64,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            resolution: 1024,
            render_size: 512,
            views: 10,
            blend_exponent: 2.0,
            depth_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct Stage2Config {
    pub enabled: bool,
    pub iterations: usize,
    pub lr_jacobians: f64,
    pub lr_texels: f64,
    pub views_per_iteration: usize,
    pub refiner_steps: usize,
    pub render_size: usize,
    pub shading: Shading,
    pub max_consecutive_failures: usize,
    pub optimizer: AdamConfig,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            enabled: true,
            iterations: 400,
            lr_jacobians: 2e-3,
            lr_texels: 1e-2,
            views_per_iteration: 1,
            refiner_steps: 15,
            render_size: 128,
            shading: Shading::default(),
            max_consecutive_failures: 10,
            optimizer: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 8.5e-4,
            beta_end: 1.2e-2,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> PipelineResult<NoiseSchedule> {
        Ok(NoiseSchedule::scaled_linear(
            self.steps,
            self.beta_start,
            self.beta_end,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct GuidanceConfig {
    /// `analytic:DIR` or `remote:URL`.
    pub source: String,
    pub timeout_ms: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub schedule: ScheduleConfig,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            source: String::new(),
            timeout_ms: 120_000,
            max_attempts: 3,
            backoff_ms: 250,
            schedule: ScheduleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct CameraConfig {
    /// Orbit radius as a multiple of the base mesh's bounding radius.
    pub radius_scale: f64,
    pub fov_y_deg: f64,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    /// Elevation of the turntable strip.
    pub turntable_elevation_deg: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            radius_scale: 2.5,
            fov_y_deg: 45.0,
            elevation_min_deg: -15.0,
            elevation_max_deg: 60.0,
            turntable_elevation_deg: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub turntable_frames: usize,
    pub turntable_size: usize,
    /// Reuse completed stage checkpoints found in the output directory.
    pub resume: bool,
    pub verbose: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            turntable_frames: 8,
            turntable_size: 256,
            resume: false,
            verbose: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> PipelineResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it are resolved against its directory.
    pub fn load(path: &Path) -> PipelineResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if !self.input.mesh.as_os_str().is_empty() && self.input.mesh.is_relative() {
            self.input.mesh = base.join(&self.input.mesh);
        }
        if self.output.dir.is_relative() {
            self.output.dir = base.join(&self.output.dir);
        }
        if let Some(dir) = self.guidance.source.strip_prefix("analytic:") {
            let p = Path::new(dir);
            if p.is_relative() {
                self.guidance.source = format!("analytic:{}", base.join(p).display());
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> PipelineResult<()> {
        let err = |m: String| Err(PipelineError::Config(m));
        let s1 = &self.stage1;
        let s2 = &self.stage2;
        if !(s1.lr_jacobians > 0.0 && s2.lr_jacobians > 0.0 && s2.lr_texels > 0.0) {
            return err("learning rates must be positive".into());
        }
        if s1.iterations == 0 || s2.iterations == 0 {
            return err("iterations must be at least 1".into());
        }
        if s1.views_per_iteration == 0 || s2.views_per_iteration == 0 {
            return err("viewsPerIteration must be at least 1".into());
        }
        if self.texture.views == 0 {
            return err("texture.views must be at least 1".into());
        }
        if s1.render_size == 0 || s2.render_size == 0 || self.texture.render_size == 0 {
            return err("render sizes must be at least 1".into());
        }
        s1.sds.validate()?;
        let c = &self.cameras;
        if !(c.radius_scale > 0.0) || !(c.fov_y_deg > 0.0 && c.fov_y_deg < 180.0) {
            return err("camera radiusScale and fovYDeg must be positive (fov below 180)".into());
        }
        if !(c.elevation_min_deg <= c.elevation_max_deg) || c.elevation_min_deg < -90.0 || c.elevation_max_deg > 90.0 {
            return err(format!(
                "elevation band [{}, {}] is empty or outside [-90, 90]",
                c.elevation_min_deg, c.elevation_max_deg
            ));
        }
        if s2.max_consecutive_failures == 0 {
            return err("maxConsecutiveFailures must be at least 1".into());
        }
        Ok(())
    }
}
