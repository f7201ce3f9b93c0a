use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::adam::Adam;
use super::cameras::CameraSource;
use super::config::Stage2Config;
use super::{PipelineError, PipelineResult};
use crate::guidance::{GuidanceError, GuidanceProvider, OracleHints, RefineRequest, Tensor};
use crate::imaging::Image;
use crate::jacobian::{JacobianField, PoissonSolver};
use crate::mesh::Mesh;
use crate::render::{backprop_pixels, rasterize, shade_textured, Camera, PixelGrads};
use crate::rng::{substream, Purpose, Stage};
use crate::texture::TextureAtlas;

/// Everything one refinement step needs besides the Jacobians and texels.
pub struct Stage2Context<'a> {
    /// Mesh the fresh Jacobians are relative to.
    pub mesh: &'a Mesh,
    pub solver: &'a PoissonSolver,
    pub provider: &'a dyn GuidanceProvider,
    pub prompt: &'a str,
    pub config: &'a Stage2Config,
    pub cameras: &'a CameraSource,
    pub seed: u64,
}

/// View-averaged gradients of `sum (render - refined)^2`.
#[derive(Debug, Clone)]
pub struct Stage2Step {
    pub jacobians: Vec<Matrix3<f64>>,
    pub texels: Vec<[f64; 3]>,
    /// Mean squared pixel residual over views.
    pub mse: f64,
    pub cameras: Vec<Camera>,
}

#[derive(Debug, Clone)]
pub struct Stage2Output {
    pub mesh: Mesh,
    pub jacobians: JacobianField,
    pub atlas: TextureAtlas,
    /// Per-iteration MSE; `None` for skipped iterations.
    pub history: Vec<Option<f64>>,
    pub skipped: usize,
}

enum ViewError {
    Refiner(GuidanceError),
    Fatal(PipelineError),
}

impl<E: Into<PipelineError>> From<E> for ViewError {
    fn from(e: E) -> Self {
        Self::Fatal(e.into())
    }
}

struct ViewResult {
    camera: Camera,
    vertices: Vec<Vector3<f64>>,
    texels: Vec<[f64; 3]>,
    mse: f64,
}

/// Gradients at `iteration`. A refiner failure is returned as `Ok(Err(_))` so the caller can
/// skip the iteration; anything else is fatal.
pub fn stage2_gradient(
    ctx: &Stage2Context,
    field: &JacobianField,
    atlas: &TextureAtlas,
    iteration: usize,
) -> PipelineResult<Result<Stage2Step, GuidanceError>> {
    let positions = ctx.solver.solve_positions(field)?;
    let mesh = ctx.mesh.deformed(positions);
    let shading = &ctx.config.shading;
    let it = iteration as u64;

    let per_view: Vec<Result<ViewResult, ViewError>> = (0..ctx.config.views_per_iteration)
        .into_par_iter()
        .map(|v| {
            let camera = ctx
                .cameras
                .sample(&mut substream(ctx.seed, Stage::Refine, Purpose::Camera, it, v as u64))?;
            let fb = rasterize(&mesh, &camera);
            let coarse = shade_textured(&fb, &mesh, atlas, shading)?;
            let req = RefineRequest {
                image: Tensor::from_image(&coarse),
                prompt: ctx.prompt.to_string(),
                steps: ctx.config.refiner_steps,
                hints: OracleHints {
                    camera: Some(camera.clone()),
                    ..Default::default()
                },
            };
            // The refined image is a fixed target: no gradient flows through the refiner.
            let refined = ctx
                .provider
                .refine(&req)
                .and_then(|t| t.to_image())
                .map_err(|e| ViewError::Refiner(e.context(format!("refine iteration {iteration}, view {v}"))))?;
            if !refined.same_shape(&coarse) {
                return Err(ViewError::Refiner(GuidanceError::Shape(format!(
                    "refined image is {}x{}x{}, expected {}x{}x3",
                    refined.width, refined.height, refined.channels, coarse.width, coarse.height
                ))));
            }
            let residual: Vec<f64> = coarse.data.iter().zip(&refined.data).map(|(x, y)| x - y).collect();
            let mse = residual.iter().map(|r| r * r).sum::<f64>() / residual.len().max(1) as f64;
            let g = Image::from_data(fb.width, fb.height, 3, residual.iter().map(|r| 2.0 * r).collect());
            let grads = backprop_pixels(
                &fb,
                &mesh,
                Some(atlas),
                shading,
                &PixelGrads {
                    color: Some(&g),
                    ..Default::default()
                },
            )?;
            Ok(ViewResult {
                camera,
                vertices: grads.vertices,
                texels: grads.texels.expect("colour gradients yield texel gradients"),
                mse,
            })
        })
        .collect();

    let n_views = per_view.len() as f64;
    let mut vertices = vec![Vector3::zeros(); ctx.mesh.vertex_count()];
    let mut texels = vec![[0.0; 3]; atlas.texels().len()];
    let mut cameras = Vec::with_capacity(per_view.len());
    let mut mse = 0.0;
    for r in per_view {
        let r = match r {
            Ok(r) => r,
            Err(ViewError::Refiner(e)) => return Ok(Err(e)),
            Err(ViewError::Fatal(e)) => return Err(e),
        };
        let bad = r.vertices.iter().any(|g| !g.iter().all(|c| c.is_finite()))
            || r.texels.iter().flatten().any(|c| !c.is_finite());
        if bad {
            return Err(PipelineError::NonFinite {
                stage: "refinement",
                what: "gradient",
                iteration,
                camera: Box::new(r.camera),
            });
        }
        for (acc, g) in vertices.iter_mut().zip(&r.vertices) {
            *acc += g / n_views;
        }
        for (acc, g) in texels.iter_mut().zip(&r.texels) {
            for c in 0..3 {
                acc[c] += g[c] / n_views;
            }
        }
        mse += r.mse / n_views;
        cameras.push(r.camera);
    }
    let jacobians = ctx.solver.solve_adjoint(&vertices)?;
    Ok(Ok(Stage2Step {
        jacobians,
        texels,
        mse,
        cameras,
    }))
}

/// Jointly refines fresh identity Jacobians over `ctx.mesh` and the texels of `atlas`.
pub fn stage2_refine(
    ctx: &Stage2Context,
    mut atlas: TextureAtlas,
    observer: &mut dyn FnMut(usize, Option<&Stage2Step>),
) -> PipelineResult<Stage2Output> {
    atlas.check_binding(ctx.mesh)?;
    let cfg = ctx.config;
    let mut field = ctx.solver.identity_field();
    let mut jparams = field.to_flat();
    let mut tparams: Vec<f64> = atlas.texels().iter().flatten().copied().collect();
    let mut jopt = Adam::new(jparams.len(), cfg.lr_jacobians, &cfg.optimizer);
    let mut topt = Adam::new(tparams.len(), cfg.lr_texels, &cfg.optimizer);
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut consecutive = 0;
    let mut skipped = 0;
    for it in 0..cfg.iterations {
        let step = match stage2_gradient(ctx, &field, &atlas, it)? {
            Ok(step) => step,
            Err(e) => {
                consecutive += 1;
                skipped += 1;
                log::warn!("refine {it}: skipped ({e})");
                history.push(None);
                observer(it, None);
                if consecutive >= cfg.max_consecutive_failures {
                    return Err(PipelineError::RefinerFailures {
                        count: consecutive,
                        last: e,
                    });
                }
                continue;
            }
        };
        consecutive = 0;
        jopt.step(
            &mut jparams,
            &JacobianField::from_matrices(step.jacobians.clone()).to_flat(),
        );
        let tgrad: Vec<f64> = step.texels.iter().flatten().copied().collect();
        topt.step(&mut tparams, &tgrad);
        if jparams.iter().any(|p| !p.is_finite()) {
            return Err(PipelineError::NonFinite {
                stage: "refinement",
                what: "Jacobian",
                iteration: it,
                camera: Box::new(step.cameras[0].clone()),
            });
        }
        for (t, p) in atlas.texels_mut().iter_mut().zip(tparams.chunks_exact(3)) {
            t.copy_from_slice(p);
        }
        if let Some(bad) = atlas.clamp_texels() {
            log::error!("refine {it}: texel {bad} is non-finite");
            return Err(PipelineError::NonFinite {
                stage: "refinement",
                what: "texel",
                iteration: it,
                camera: Box::new(step.cameras[0].clone()),
            });
        }
        // Keep the optimizer state on the clamped values.
        for (p, t) in tparams.chunks_exact_mut(3).zip(atlas.texels()) {
            p.copy_from_slice(t);
        }
        field = JacobianField::from_flat(&jparams);
        history.push(Some(step.mse));
        if it % 50 == 0 || it + 1 == cfg.iterations {
            log::info!("refine {it}: mse {:.6e}", step.mse);
        }
        observer(it, Some(&step));
    }
    let mesh = Mesh::new(ctx.solver.solve_positions(&field)?, ctx.mesh.faces().to_vec())?;
    Ok(Stage2Output {
        mesh,
        jacobians: field,
        atlas,
        history,
        skipped,
    })
}
