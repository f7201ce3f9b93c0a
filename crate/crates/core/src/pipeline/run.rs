use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::cameras::{template_camera, CameraSource};
use super::config::{GuidanceConfig, PipelineConfig};
use super::stage1::{stage1_deform, Stage1Context};
use super::stage2::{stage2_refine, Stage2Context};
use super::{io_err, PipelineError, PipelineResult};
use crate::guidance::{AnalyticOracle, GuidanceProvider, LatentSpec, MockProvider, RemoteOptions, RemoteProvider};
use crate::imaging::Image;
use crate::jacobian::{JacobianField, PoissonSolver};
use crate::mesh::{load_mesh, save_mesh, CornerUvs, Mesh};
use crate::render::{orbit, rasterize, shade_textured, Shading};
use crate::texture::{generate_atlas, paint, FillState, ProjectionParams, TextureAtlas, ViewSchedule};

/// Builds the provider named by `guidance.source`: `analytic:DIR`, `remote:URL` or `mock`.
pub fn build_provider(cfg: &GuidanceConfig, latent: LatentSpec) -> PipelineResult<Box<dyn GuidanceProvider>> {
    let src = cfg.source.as_str();
    if let Some(dir) = src.strip_prefix("analytic:") {
        return Ok(Box::new(AnalyticOracle::load_dir(Path::new(dir), latent)?));
    }
    if let Some(url) = src.strip_prefix("remote:") {
        let options = RemoteOptions {
            timeout: Duration::from_millis(cfg.timeout_ms),
            max_attempts: cfg.max_attempts,
            backoff: Duration::from_millis(cfg.backoff_ms),
        };
        return Ok(Box::new(RemoteProvider::connect(url, options)?));
    }
    if src == "mock" {
        return Ok(Box::new(MockProvider::perfect(latent)));
    }
    Err(PipelineError::Config(format!(
        "guidance source `{src}` is not one of analytic:DIR, remote:URL, mock"
    )))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub deform_s: Option<f64>,
    pub texture_s: Option<f64>,
    pub refine_s: Option<f64>,
    pub total_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FinalLosses {
    /// Mean squared SDS gradient entry of the last deformation iteration.
    pub deform_sds_energy: Option<f64>,
    /// Render-vs-refined MSE of the last completed refinement iteration.
    pub refine_mse: Option<f64>,
    pub refine_skipped: usize,
}

/// Written as `report.json`. Everything except `timings` is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub timings: StageTimings,
    pub losses: FinalLosses,
    pub coverage: Option<f64>,
    pub vertices: usize,
    pub faces: usize,
    /// Stages restored from checkpoints instead of run.
    pub resumed: Vec<String>,
    pub outputs: Vec<PathBuf>,
}

impl RunReport {
    fn new(cfg: &PipelineConfig) -> Self {
        Self {
            config: cfg.clone(),
            timings: StageTimings::default(),
            losses: FinalLosses::default(),
            coverage: None,
            vertices: 0,
            faces: 0,
            resumed: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn write(&mut self, dir: &Path, started: Instant) -> PipelineResult<()> {
        self.timings.total_s = started.elapsed().as_secs_f64();
        let path = dir.join("report.json");
        self.outputs.push(path.clone());
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(&path, text).map_err(io_err(&path))
    }
}

/// Loads an OBJ with UVs and its texture, `<stem>.png` or the `map_Kd` of `<stem>.mtl`.
/// Every owned texel is marked painted.
pub fn load_textured(path: &Path) -> PipelineResult<(Mesh, TextureAtlas)> {
    let data = load_mesh(path)?;
    let uvs = data
        .uvs
        .ok_or_else(|| PipelineError::Config(format!("{} has no texture coordinates", path.display())))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh");
    let mut png = path.with_file_name(format!("{stem}.png"));
    let mtl = path.with_file_name(format!("{stem}.mtl"));
    if let Ok(text) = fs::read_to_string(&mtl) {
        if let Some(name) = text.lines().find_map(|l| l.trim().strip_prefix("map_Kd ")) {
            png = path.with_file_name(name.trim());
        }
    }
    let img = Image::load_png_rgb(&png)?;
    if img.width != img.height {
        return Err(PipelineError::Config(format!(
            "texture {} is {}x{}; a square atlas is required",
            png.display(),
            img.width,
            img.height
        )));
    }
    let mut atlas = TextureAtlas::from_uvs(uvs, img.width)?;
    atlas.set_texels_from_image(&img)?;
    atlas.fill.fill(FillState::Painted);
    atlas.weight.fill(1.0);
    Ok((data.mesh, atlas))
}

/// Texturing viewpoints: the provider's fixed cameras when it has some, else a ring.
pub fn texture_schedule(
    cfg: &PipelineConfig,
    mesh: &Mesh,
    provider: &dyn GuidanceProvider,
) -> PipelineResult<ViewSchedule> {
    if let Some(cams) = provider.registered_cameras().filter(|c| !c.is_empty()) {
        return Ok(ViewSchedule::new(cams)?);
    }
    let template = template_camera(&cfg.cameras, mesh, cfg.texture.render_size)?;
    Ok(ViewSchedule::ring(&template, cfg.texture.views))
}

/// Frames evenly spaced in azimuth, side by side.
pub fn render_turntable(
    cfg: &PipelineConfig,
    mesh: &Mesh,
    atlas: &TextureAtlas,
    shading: &Shading,
) -> PipelineResult<Image> {
    let template = template_camera(&cfg.cameras, mesh, cfg.output.turntable_size)?;
    let frames = orbit(
        cfg.output.turntable_frames.max(1),
        cfg.cameras.turntable_elevation_deg.to_radians(),
        &template,
    )
    .iter()
    .map(|cam| shade_textured(&rasterize(mesh, cam), mesh, atlas, shading))
    .collect::<Result<Vec<_>, _>>()?;
    Ok(Image::hstack(&frames))
}

struct Paths {
    out: PathBuf,
    ckpt: PathBuf,
}

impl Paths {
    fn new(cfg: &PipelineConfig) -> PipelineResult<Self> {
        let out = cfg.output.dir.clone();
        let ckpt = out.join("checkpoints");
        fs::create_dir_all(&ckpt).map_err(io_err(&ckpt))?;
        Ok(Self { out, ckpt })
    }
}

fn load_input(cfg: &PipelineConfig) -> PipelineResult<(Mesh, Option<CornerUvs>)> {
    if cfg.input.mesh.as_os_str().is_empty() {
        return Err(PipelineError::Config("input.mesh is not set".into()));
    }
    let data = load_mesh(&cfg.input.mesh)?;
    log::info!(
        "loaded {}: {} vertices, {} faces",
        cfg.input.mesh.display(),
        data.mesh.vertex_count(),
        data.mesh.face_count()
    );
    Ok((data.mesh, data.uvs))
}

fn deform(
    cfg: &PipelineConfig,
    provider: &dyn GuidanceProvider,
    base: &Mesh,
    paths: &Paths,
    report: &mut RunReport,
) -> PipelineResult<Mesh> {
    let solver = PoissonSolver::new(base)?;
    let jac_path = paths.ckpt.join("deform_jacobians.bin");
    if cfg.output.resume && jac_path.exists() {
        let field = JacobianField::load(&jac_path)?;
        report.resumed.push("deform".into());
        return Ok(Mesh::new(solver.solve_positions(&field)?, base.faces().to_vec())?);
    }
    let t0 = Instant::now();
    let schedule = cfg.guidance.schedule.build()?;
    let cameras = CameraSource::new(
        &cfg.cameras,
        base,
        cfg.stage1.render_size,
        provider.registered_cameras(),
    );
    let ctx = Stage1Context {
        base,
        solver: &solver,
        provider,
        prompt: &cfg.input.prompt,
        config: &cfg.stage1,
        cameras: &cameras,
        schedule: &schedule,
        seed: cfg.seed,
        diagnostics_dir: Some(&paths.ckpt),
    };
    let out = stage1_deform(&ctx, None, &mut |_, _| {})?;
    out.jacobians.save(&jac_path)?;
    save_mesh(paths.ckpt.join("deform_mesh.obj"), &out.mesh, None, None)?;
    report.losses.deform_sds_energy = out.history.last().copied();
    report.timings.deform_s = Some(t0.elapsed().as_secs_f64());
    Ok(out.mesh)
}

fn texture(
    cfg: &PipelineConfig,
    provider: &dyn GuidanceProvider,
    mesh: &Mesh,
    authored: Option<&CornerUvs>,
    paths: &Paths,
    report: &mut RunReport,
) -> PipelineResult<TextureAtlas> {
    let mut atlas = generate_atlas(mesh, cfg.texture.resolution, authored)?;
    let stem = "texture_atlas";
    if cfg.output.resume && paths.ckpt.join(format!("{stem}.raw")).exists() {
        let atlas = TextureAtlas::load_checkpoint(atlas.uvs().clone(), &paths.ckpt, stem)?;
        report.resumed.push("texture".into());
        report.coverage = Some(atlas.coverage_fraction());
        return Ok(atlas);
    }
    if !cfg.texture.enabled {
        atlas.fill_constant([0.5; 3]);
        return Ok(atlas);
    }
    let t0 = Instant::now();
    let schedule = texture_schedule(cfg, mesh, provider)?;
    let params = ProjectionParams {
        exponent: cfg.texture.blend_exponent,
        depth_tolerance: cfg.texture.depth_tolerance,
    };
    let r = paint(
        mesh,
        &mut atlas,
        &schedule,
        provider,
        &cfg.input.prompt,
        &params,
        Some(&paths.ckpt),
    )?;
    atlas.save_checkpoint(&paths.ckpt, stem)?;
    report.coverage = Some(r.coverage);
    report.timings.texture_s = Some(t0.elapsed().as_secs_f64());
    Ok(atlas)
}

fn refine(
    cfg: &PipelineConfig,
    provider: &dyn GuidanceProvider,
    mesh: &Mesh,
    atlas: TextureAtlas,
    paths: &Paths,
    report: &mut RunReport,
) -> PipelineResult<(Mesh, TextureAtlas)> {
    let solver = PoissonSolver::new(mesh)?;
    let jac_path = paths.ckpt.join("refine_jacobians.bin");
    let stem = "refine_atlas";
    if cfg.output.resume && jac_path.exists() && paths.ckpt.join(format!("{stem}.raw")).exists() {
        let field = JacobianField::load(&jac_path)?;
        let atlas = TextureAtlas::load_checkpoint(atlas.uvs().clone(), &paths.ckpt, stem)?;
        report.resumed.push("refine".into());
        return Ok((
            Mesh::new(solver.solve_positions(&field)?, mesh.faces().to_vec())?,
            atlas,
        ));
    }
    let t0 = Instant::now();
    let cameras = CameraSource::new(
        &cfg.cameras,
        mesh,
        cfg.stage2.render_size,
        provider.registered_cameras(),
    );
    let ctx = Stage2Context {
        mesh,
        solver: &solver,
        provider,
        prompt: &cfg.input.prompt,
        config: &cfg.stage2,
        cameras: &cameras,
        seed: cfg.seed,
    };
    let out = stage2_refine(&ctx, atlas, &mut |_, _| {})?;
    out.jacobians.save(&jac_path)?;
    out.atlas.save_checkpoint(&paths.ckpt, stem)?;
    report.losses.refine_mse = out.history.iter().rev().find_map(|h| *h);
    report.losses.refine_skipped = out.skipped;
    report.timings.refine_s = Some(t0.elapsed().as_secs_f64());
    Ok((out.mesh, out.atlas))
}

fn finish(
    cfg: &PipelineConfig,
    mesh: &Mesh,
    atlas: Option<&TextureAtlas>,
    paths: &Paths,
    report: &mut RunReport,
    started: Instant,
) -> PipelineResult<()> {
    let obj = paths.out.join("mesh.obj");
    let saved = match atlas {
        Some(a) => save_mesh(&obj, mesh, Some(a.uvs()), Some(&a.texel_image()))?,
        None => save_mesh(&obj, mesh, None, None)?,
    };
    report.outputs.push(saved.obj);
    report.outputs.extend(saved.mtl);
    report.outputs.extend(saved.texture);
    if let Some(a) = atlas {
        let strip = render_turntable(cfg, mesh, a, &cfg.stage2.shading)?;
        let path = paths.out.join("turntable.png");
        strip.save_png(&path)?;
        report.outputs.push(path);
    }
    report.vertices = mesh.vertex_count();
    report.faces = mesh.face_count();
    report.write(&paths.out, started)
}

/// Runs deformation, texturing and refinement, writing checkpoints, the textured mesh, a
/// turntable strip and `report.json` under `output.dir`.
pub fn run_full(cfg: &PipelineConfig, provider: &dyn GuidanceProvider) -> PipelineResult<RunReport> {
    cfg.validate()?;
    let started = Instant::now();
    let paths = Paths::new(cfg)?;
    let mut report = RunReport::new(cfg);
    let (base, authored) = load_input(cfg)?;
    let m1 = if cfg.stage1.enabled {
        deform(cfg, provider, &base, &paths, &mut report)?
    } else {
        base
    };
    let atlas = texture(cfg, provider, &m1, authored.as_ref(), &paths, &mut report)?;
    let (m2, atlas) = if cfg.stage2.enabled {
        refine(cfg, provider, &m1, atlas, &paths, &mut report)?
    } else {
        (m1, atlas)
    };
    finish(cfg, &m2, Some(&atlas), &paths, &mut report, started)?;
    Ok(report)
}

/// Deformation only; writes the deformed, untextured mesh.
pub fn run_stage1(cfg: &PipelineConfig, provider: &dyn GuidanceProvider) -> PipelineResult<RunReport> {
    cfg.validate()?;
    let started = Instant::now();
    let paths = Paths::new(cfg)?;
    let mut report = RunReport::new(cfg);
    let (base, _) = load_input(cfg)?;
    let m1 = deform(cfg, provider, &base, &paths, &mut report)?;
    finish(cfg, &m1, None, &paths, &mut report, started)?;
    Ok(report)
}

/// Texturing only, over the input mesh as given.
pub fn run_texture(cfg: &PipelineConfig, provider: &dyn GuidanceProvider) -> PipelineResult<RunReport> {
    cfg.validate()?;
    let started = Instant::now();
    let paths = Paths::new(cfg)?;
    let mut report = RunReport::new(cfg);
    let (mesh, authored) = load_input(cfg)?;
    let atlas = texture(cfg, provider, &mesh, authored.as_ref(), &paths, &mut report)?;
    finish(cfg, &mesh, Some(&atlas), &paths, &mut report, started)?;
    Ok(report)
}

/// Refinement only; the input must be a textured OBJ.
pub fn run_refine(cfg: &PipelineConfig, provider: &dyn GuidanceProvider) -> PipelineResult<RunReport> {
    cfg.validate()?;
    let started = Instant::now();
    let paths = Paths::new(cfg)?;
    let mut report = RunReport::new(cfg);
    let (mesh, atlas) = load_textured(&cfg.input.mesh)?;
    report.coverage = Some(atlas.coverage_fraction());
    let (m2, atlas) = refine(cfg, provider, &mesh, atlas, &paths, &mut report)?;
    finish(cfg, &m2, Some(&atlas), &paths, &mut report, started)?;
    Ok(report)
}
