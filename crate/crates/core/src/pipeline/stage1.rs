use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::adam::Adam;
use super::cameras::CameraSource;
use super::config::Stage1Config;
use super::{PipelineError, PipelineResult};
use crate::guidance::{
    latent_to_normals_adjoint, normals_to_latent, sds_gradient, GuidanceProvider, NoiseSchedule, OracleHints,
};
use crate::jacobian::{JacobianField, PoissonSolver};
use crate::mesh::Mesh;
use crate::render::{backprop_pixels, rasterize, save_buffers, Camera, PixelGrads, Shading};
use crate::rng::{substream, Purpose, Stage};

/// Everything one deformation step needs besides the Jacobians.
pub struct Stage1Context<'a> {
    pub base: &'a Mesh,
    pub solver: &'a PoissonSolver,
    pub provider: &'a dyn GuidanceProvider,
    pub prompt: &'a str,
    pub config: &'a Stage1Config,
    pub cameras: &'a CameraSource,
    pub schedule: &'a NoiseSchedule,
    pub seed: u64,
    /// Receives the offending view's buffers when a gradient goes non-finite.
    pub diagnostics_dir: Option<&'a Path>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSample {
    pub camera: Camera,
    pub t: usize,
}

/// View-averaged gradients of one deformation iteration.
#[derive(Debug, Clone)]
pub struct Stage1Step {
    pub jacobians: Vec<Matrix3<f64>>,
    pub vertices: Vec<Vector3<f64>>,
    pub views: Vec<ViewSample>,
    /// Mean squared SDS gradient entry over views.
    pub sds_energy: f64,
}

#[derive(Debug, Clone)]
pub struct Stage1Output {
    pub mesh: Mesh,
    pub jacobians: JacobianField,
    pub history: Vec<f64>,
}

struct ViewResult {
    sample: ViewSample,
    vertices: Vec<Vector3<f64>>,
    energy: f64,
}

fn all_finite(v: &[Vector3<f64>]) -> bool {
    v.iter().all(|g| g.iter().all(|c| c.is_finite()))
}

/// Gradient of the SDS objective with respect to `field` at `iteration`.
pub fn stage1_gradient(ctx: &Stage1Context, field: &JacobianField, iteration: usize) -> PipelineResult<Stage1Step> {
    let positions = ctx.solver.solve_positions(field)?;
    let mesh = ctx.base.deformed(positions);
    let spec = ctx.provider.latent_spec();
    let shading = Shading::default();
    let it = iteration as u64;

    let per_view: Vec<PipelineResult<ViewResult>> = (0..ctx.config.views_per_iteration)
        .into_par_iter()
        .map(|v| {
            let view = v as u64;
            let camera = ctx
                .cameras
                .sample(&mut substream(ctx.seed, Stage::Deform, Purpose::Camera, it, view))?;
            let fb = rasterize(&mesh, &camera);
            let x = normals_to_latent(&fb.normal, &spec)?;
            let sds = sds_gradient(
                &x,
                ctx.prompt,
                ctx.provider,
                &ctx.config.sds,
                ctx.schedule,
                &mut substream(ctx.seed, Stage::Deform, Purpose::Timestep, it, view),
                &mut substream(ctx.seed, Stage::Deform, Purpose::Noise, it, view),
                OracleHints {
                    camera: Some(camera.clone()),
                    ..Default::default()
                },
            )
            .map_err(|e| e.context(format!("deformation iteration {iteration}, view {v}")))?;
            let g_img = latent_to_normals_adjoint(&sds.gradient, &spec, fb.height, fb.width)?;
            let grads = backprop_pixels(
                &fb,
                &mesh,
                None,
                &shading,
                &PixelGrads {
                    normal: Some(&g_img),
                    ..Default::default()
                },
            )?;
            if !all_finite(&grads.vertices) {
                if let Some(dir) = ctx.diagnostics_dir {
                    let _ = save_buffers(&fb, dir, &format!("nonfinite_it{iteration}_view{v}"));
                }
                return Err(PipelineError::NonFinite {
                    stage: "deformation",
                    what: "vertex gradient",
                    iteration,
                    camera: Box::new(camera),
                });
            }
            let energy = sds.gradient.data.iter().map(|g| g * g).sum::<f64>() / sds.gradient.len().max(1) as f64;
            Ok(ViewResult {
                sample: ViewSample { camera, t: sds.t },
                vertices: grads.vertices,
                energy,
            })
        })
        .collect();

    // Fixed-order reduction keeps results independent of the thread count.
    let n_views = per_view.len() as f64;
    let mut vertices = vec![Vector3::zeros(); ctx.base.vertex_count()];
    let mut views = Vec::with_capacity(per_view.len());
    let mut sds_energy = 0.0;
    for r in per_view {
        let r = r?;
        for (acc, g) in vertices.iter_mut().zip(&r.vertices) {
            *acc += g / n_views;
        }
        sds_energy += r.energy / n_views;
        views.push(r.sample);
    }
    let jacobians = ctx.solver.solve_adjoint(&vertices)?;
    Ok(Stage1Step {
        jacobians,
        vertices,
        views,
        sds_energy,
    })
}

/// Optimizes the Jacobians of `ctx.base` from `init` (identity when `None`) and returns the
/// deformed mesh. `observer` sees every iteration's step.
pub fn stage1_deform(
    ctx: &Stage1Context,
    init: Option<JacobianField>,
    observer: &mut dyn FnMut(usize, &Stage1Step),
) -> PipelineResult<Stage1Output> {
    let mut field = init.unwrap_or_else(|| ctx.solver.identity_field());
    let mut params = field.to_flat();
    let mut adam = Adam::new(params.len(), ctx.config.lr_jacobians, &ctx.config.optimizer);
    let mut history = Vec::with_capacity(ctx.config.iterations);
    for it in 0..ctx.config.iterations {
        let step = stage1_gradient(ctx, &field, it)?;
        let flat = JacobianField::from_matrices(step.jacobians.clone()).to_flat();
        adam.step(&mut params, &flat);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(PipelineError::NonFinite {
                stage: "deformation",
                what: "Jacobian",
                iteration: it,
                camera: Box::new(step.views[0].camera.clone()),
            });
        }
        field = JacobianField::from_flat(&params);
        history.push(step.sds_energy);
        if it % 50 == 0 || it + 1 == ctx.config.iterations {
            log::info!("deform {it}: sds energy {:.6e}", step.sds_energy);
        }
        observer(it, &step);
    }
    let mesh = Mesh::new(ctx.solver.solve_positions(&field)?, ctx.base.faces().to_vec())?;
    Ok(Stage1Output {
        mesh,
        jacobians: field,
        history,
    })
}
