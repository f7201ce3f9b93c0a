//! Measurements shared by the integration tests and the acceptance report. Each returns the
//! number a criterion is judged on; callers assert.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trimorph::guidance::{
    normals_to_latent, sds_gradient, AnalyticOracle, DenoiseMock, GuidanceProvider, LatentSpec, MockProvider,
    NoiseSchedule, OracleHints, SdsConfig, TargetScene, WeightMode,
};
use trimorph::imaging::{psnr, Image, Mask};
use trimorph::mesh::{primitives, Mesh};
use trimorph::pipeline::{
    stage1_deform, stage1_gradient, stage2_gradient, stage2_refine, CameraConfig, CameraSource, Stage1Config,
    Stage1Context, Stage2Config, Stage2Context,
};
use trimorph::render::{backprop_pixels, rasterize, shade_textured, Camera, PixelGrads, Shading};
use trimorph::texture::{generate_atlas, paint, ProjectionParams, TextureAtlas, ViewSchedule};
use trimorph::{JacobianField, PoissonSolver};

use super::{checker, pattern, procedural_atlas, random_jacobians, random_small_mesh, rel_err};

/// Per-face hat-function gradients, one column per corner, computed from scratch.
fn hat_gradients(mesh: &Mesh, f: usize) -> Matrix3<f64> {
    let [p0, p1, p2] = mesh.face_positions(f);
    let c = (p1 - p0).cross(&(p2 - p0));
    let two_a = c.norm();
    let n = c / two_a;
    let opp = [p2 - p1, p0 - p2, p1 - p0];
    Matrix3::from_columns(&opp.map(|e| n.cross(&e) / two_a))
}

/// Dense constrained least squares: min sum_f A_f |X_f G_f^T - M_f|^2 with each component's
/// vertex centroid pinned to the base centroid, solved through the KKT system.
pub fn dense_poisson(mesh: &Mesh, jac: &[Matrix3<f64>]) -> Vec<Vector3<f64>> {
    let n = mesh.vertex_count();
    let (labels, k) = mesh.connected_components();
    let mut lap = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DMatrix::<f64>::zeros(n, 3);
    for (fi, f) in mesh.faces().iter().enumerate() {
        let g = hat_gradients(mesh, fi);
        let area = 0.5 * mesh.face_cross(fi).norm();
        for a in 0..3 {
            for b in 0..3 {
                lap[(f[a], f[b])] += area * g.column(a).dot(&g.column(b));
            }
            for r in 0..3 {
                rhs[(f[a], r)] += area * g.column(a).dot(&jac[fi].row(r).transpose());
            }
        }
    }
    let mut kkt = DMatrix::<f64>::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&lap);
    let mut sizes = vec![0usize; k];
    for &c in &labels {
        sizes[c] += 1;
    }
    let mut centroid = vec![Vector3::zeros(); k];
    for (v, &c) in labels.iter().enumerate() {
        kkt[(v, n + c)] = 1.0 / sizes[c] as f64;
        kkt[(n + c, v)] = 1.0 / sizes[c] as f64;
        centroid[c] += mesh.vertices()[v] / sizes[c] as f64;
    }
    let lu = kkt.lu();
    let mut out = vec![Vector3::zeros(); n];
    for r in 0..3 {
        let mut b = DVector::<f64>::zeros(n + k);
        for v in 0..n {
            b[v] = rhs[(v, r)];
        }
        for c in 0..k {
            b[n + c] = centroid[c][r];
        }
        let x = lu.solve(&b).expect("KKT system is nonsingular");
        for v in 0..n {
            out[v][r] = x[v];
        }
    }
    out
}

fn max_rel(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    let scale = b.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1.0);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

pub fn fixture_meshes() -> Vec<Mesh> {
    vec![
        primitives::single_triangle(),
        primitives::tetrahedron(),
        primitives::cube(),
        primitives::icosphere(3),
        primitives::blob(),
    ]
}

/// Largest identity-solve deviation over the fixtures, in units of each bounding radius.
pub fn identity_deviation() -> f64 {
    fixture_meshes()
        .iter()
        .map(|mesh| {
            let solver = PoissonSolver::new(mesh).unwrap();
            let x = solver.solve_positions(&solver.identity_field()).unwrap();
            let dev = x
                .iter()
                .zip(mesh.vertices())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            dev / mesh.bounding_radius()
        })
        .fold(0.0, f64::max)
}

/// Worst relative gap between the sparse solve and the dense oracle over random meshes.
pub fn poisson_oracle_error(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mesh = random_small_mesh(&mut rng);
        assert!(mesh.vertex_count() <= 200);
        let jac = random_jacobians(&mut rng, mesh.face_count(), 0.4);
        let solver = PoissonSolver::new(&mesh).unwrap();
        let sparse = solver
            .solve_positions(&JacobianField::from_matrices(jac.clone()))
            .unwrap();
        worst = worst.max(max_rel(&sparse, &dense_poisson(&mesh, &jac)));
    }
    worst
}

/// Worst relative error of the Poisson adjoint against central differences of a quadratic
/// loss, over 40 random entries.
pub fn adjoint_fd_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = random_small_mesh(&mut rng);
    let solver = PoissonSolver::new(&mesh).unwrap();
    let jac = random_jacobians(&mut rng, mesh.face_count(), 0.3);
    let weights: Vec<Vector3<f64>> = (0..mesh.vertex_count())
        .map(|_| {
            Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let loss = |j: &[Matrix3<f64>]| -> f64 {
        let x = solver
            .solve_positions(&JacobianField::from_matrices(j.to_vec()))
            .unwrap();
        x.iter()
            .zip(&weights)
            .map(|(p, w)| p.dot(w) + 0.5 * p.norm_squared())
            .sum()
    };
    let x = solver
        .solve_positions(&JacobianField::from_matrices(jac.clone()))
        .unwrap();
    let dx: Vec<Vector3<f64>> = x.iter().zip(&weights).map(|(p, w)| w + p).collect();
    let grad = solver.solve_adjoint(&dx).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let f = rng.gen_range(0..mesh.face_count());
        let (r, c) = (rng.gen_range(0..3), rng.gen_range(0..3));
        let mut jp = jac.clone();
        let mut jm = jac.clone();
        jp[f][(r, c)] += h;
        jm[f][(r, c)] -= h;
        let fd = (loss(&jp) - loss(&jm)) / (2.0 * h);
        worst = worst.max(rel_err(grad[f][(r, c)], fd, 1e-6));
    }
    worst
}

/// Random linear functionals of the colour, normal and depth buffers.
pub struct BufferWeights {
    pub color: Image,
    pub normal: Image,
    pub depth: Vec<f64>,
}

impl BufferWeights {
    pub fn random(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Self {
        let mut img = |c| Image::from_data(w, h, c, (0..w * h * c).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let color = img(3);
        let normal = img(3);
        let depth = img(1).data;
        Self { color, normal, depth }
    }

    pub fn color_only(&self) -> Self {
        Self {
            color: self.color.clone(),
            normal: Image::new(self.color.width, self.color.height, 3),
            depth: vec![0.0; self.depth.len()],
        }
    }
}

/// Weighted sum of the buffers over covered pixels, plus the visibility it was computed under.
pub fn buffer_objective(
    mesh: &Mesh,
    cam: &Camera,
    atlas: &TextureAtlas,
    shading: &Shading,
    w: &BufferWeights,
) -> (f64, Vec<i64>) {
    let fb = rasterize(mesh, cam);
    let color = shade_textured(&fb, mesh, atlas, shading).unwrap();
    let mut total = 0.0;
    for p in fb.covered() {
        for c in 0..3 {
            total += w.color.data[3 * p + c] * color.data[3 * p + c];
            total += w.normal.data[3 * p + c] * fb.normal.data[3 * p + c];
        }
        total += w.depth[p] * fb.depth[p];
    }
    (total, fb.face_id)
}

/// Randomly scaled icosphere with a random atlas, a random 32x32 camera and random weights.
pub fn render_setup(seed: u64) -> (Mesh, Camera, TextureAtlas, BufferWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = primitives::icosphere(1);
    let mesh = Mesh::new(
        base.vertices().iter().map(|p| p * rng.gen_range(0.9..1.1)).collect(),
        base.faces().to_vec(),
    )
    .unwrap();
    let mut atlas = generate_atlas(&mesh, 128, None).unwrap();
    for t in atlas.texels_mut() {
        *t = [rng.gen(), rng.gen(), rng.gen()];
    }
    let cam = Camera::new(rng.gen_range(0.0..6.0), rng.gen_range(-0.6..0.6), 3.0, 0.8, 32, 32).unwrap();
    let w = BufferWeights::random(&mut rng, 32, 32);
    (mesh, cam, atlas, w)
}

/// Accumulates the relative L2 error between analytic and finite-difference gradients over
/// entries whose perturbations kept visibility fixed.
#[derive(Debug, Default)]
pub struct GradientComparison {
    num: f64,
    den: f64,
    pub kept: usize,
    pub total: usize,
}

impl GradientComparison {
    pub fn add(&mut self, analytic: f64, fd: Option<f64>) {
        self.total += 1;
        if let Some(fd) = fd {
            self.num += (analytic - fd).powi(2);
            self.den += fd * fd;
            self.kept += 1;
        }
    }

    /// Relative error; infinite when too few entries kept visibility or all were zero.
    pub fn error(&self) -> f64 {
        if self.kept * 2 < self.total || self.den == 0.0 {
            return f64::INFINITY;
        }
        (self.num / self.den).sqrt()
    }
}

/// Central difference of `loss`, or `None` if either side changed visibility.
pub fn central<V: PartialEq>(h: f64, base: &V, mut loss: impl FnMut(f64) -> (f64, V)) -> Option<f64> {
    let (lp, vp) = loss(h);
    let (lm, vm) = loss(-h);
    (vp == *base && vm == *base).then(|| (lp - lm) / (2.0 * h))
}

/// Fixed-visibility vertex gradients of colour, normal and depth against central differences.
pub fn render_fd_error(seed: u64) -> f64 {
    let shading = Shading::default();
    let (mesh, cam, atlas, w) = render_setup(seed);
    let fb = rasterize(&mesh, &cam);
    let grads = backprop_pixels(
        &fb,
        &mesh,
        Some(&atlas),
        &shading,
        &PixelGrads {
            color: Some(&w.color),
            normal: Some(&w.normal),
            depth: Some(&w.depth),
        },
    )
    .unwrap();
    let mut cmp = GradientComparison::default();
    for v in 0..mesh.vertex_count() {
        for k in 0..3 {
            let fd = central(1e-6, &fb.face_id, |h| {
                let mut p = mesh.vertices().to_vec();
                p[v][k] += h;
                buffer_objective(&mesh.deformed(p), &cam, &atlas, &shading, &w)
            });
            cmp.add(grads.vertices[v][k], fd);
        }
    }
    cmp.error()
}

const E2E_SIZE: usize = 32;

fn e2e_oracle() -> AnalyticOracle {
    let target = primitives::transformed(
        &primitives::cube(),
        &Matrix3::new(1.3, 0.1, 0.0, 0.0, 0.9, 0.0, 0.05, 0.0, 1.1),
        Vector3::zeros(),
    );
    let atlas = procedural_atlas(&target, 128, |p| pattern(p, 4.0));
    AnalyticOracle::from_scene(
        TargetScene {
            mesh: target,
            atlas: Some(atlas),
            shading: Shading::default(),
        },
        LatentSpec {
            h: E2E_SIZE,
            w: E2E_SIZE,
            c: 3,
        },
    )
    .exact()
}

fn e2e_start(m: usize) -> JacobianField {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    JacobianField::from_matrices(random_jacobians(&mut rng, m, 0.1))
}

/// Deformation step on the 12-face cube at 32x32 against finite differences of the weighted
/// latent distance the analytic denoiser makes it descend, with the step's views held fixed.
pub fn e2e_deformation_error() -> f64 {
    let base = primitives::cube();
    let solver = PoissonSolver::new(&base).unwrap();
    let oracle = e2e_oracle();
    let spec = oracle.latent_spec();
    let schedule = NoiseSchedule::default();
    let cfg = Stage1Config {
        views_per_iteration: 3,
        render_size: E2E_SIZE,
        latent: spec,
        ..Default::default()
    };
    let cameras = CameraSource::new(&CameraConfig::default(), &base, E2E_SIZE, None);
    let ctx = Stage1Context {
        base: &base,
        solver: &solver,
        provider: &oracle,
        prompt: "p",
        config: &cfg,
        cameras: &cameras,
        schedule: &schedule,
        seed: 6,
        diagnostics_dir: None,
    };
    let field = e2e_start(base.face_count());
    let step = stage1_gradient(&ctx, &field, 2).unwrap();
    let targets: Vec<_> = step
        .views
        .iter()
        .map(|v| normals_to_latent(&oracle.target_normals(&v.camera).unwrap(), &spec).unwrap())
        .collect();
    let loss = |f: &JacobianField| {
        let mesh = base.deformed(solver.solve_positions(f).unwrap());
        let mut total = 0.0;
        let mut vis = Vec::new();
        for (v, z) in step.views.iter().zip(&targets) {
            let fb = rasterize(&mesh, &v.camera);
            let x = normals_to_latent(&fb.normal, &spec).unwrap();
            let d2: f64 = x.data.iter().zip(&z.data).map(|(a, b)| (a - b).powi(2)).sum();
            total += cfg.sds.weight(&schedule, v.t) * oracle.lambda * 0.5 * d2 / step.views.len() as f64;
            vis.push(fb.face_id);
        }
        (total, vis)
    };
    let base_vis = loss(&field).1;
    let mut cmp = GradientComparison::default();
    for f in 0..base.face_count() {
        for k in 0..9 {
            let fd = central(1e-6, &base_vis, |h| {
                let mut g = field.clone();
                g.matrices_mut()[f][k] += h;
                loss(&g)
            });
            cmp.add(step.jacobians[f][k], fd);
        }
    }
    cmp.error()
}

/// Refinement step on the 12-face cube at 32x32 against finite differences of the squared
/// render-vs-target error: (Jacobian error, texel error).
pub fn e2e_refinement_errors() -> (f64, f64) {
    let mesh = primitives::cube();
    let solver = PoissonSolver::new(&mesh).unwrap();
    let oracle = e2e_oracle();
    let cfg = Stage2Config {
        views_per_iteration: 3,
        render_size: E2E_SIZE,
        ..Default::default()
    };
    let cameras = CameraSource::new(&CameraConfig::default(), &mesh, E2E_SIZE, None);
    let ctx = Stage2Context {
        mesh: &mesh,
        solver: &solver,
        provider: &oracle,
        prompt: "p",
        config: &cfg,
        cameras: &cameras,
        seed: 8,
    };
    let atlas = procedural_atlas(&mesh, 128, |p| checker(p, 2.0));
    let field = e2e_start(mesh.face_count());
    let step = stage2_gradient(&ctx, &field, &atlas, 1).unwrap().unwrap();
    let targets: Vec<_> = step.cameras.iter().map(|c| oracle.target_color(c).unwrap()).collect();
    let loss = |f: &JacobianField, a: &TextureAtlas| {
        let m = mesh.deformed(solver.solve_positions(f).unwrap());
        let mut total = 0.0;
        let mut vis = Vec::new();
        for (cam, y) in step.cameras.iter().zip(&targets) {
            let fb = rasterize(&m, cam);
            let x = shade_textured(&fb, &m, a, &cfg.shading).unwrap();
            total += x.data.iter().zip(&y.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / step.cameras.len() as f64;
            vis.push(fb.face_id);
        }
        (total, vis)
    };
    let base_vis = loss(&field, &atlas).1;

    let mut jac = GradientComparison::default();
    for f in 0..mesh.face_count() {
        for k in 0..9 {
            let fd = central(1e-6, &base_vis, |h| {
                let mut g = field.clone();
                g.matrices_mut()[f][k] += h;
                loss(&g, &atlas)
            });
            jac.add(step.jacobians[f][k], fd);
        }
    }

    let touched: Vec<usize> = (0..step.texels.len()).filter(|&t| step.texels[t] != [0.0; 3]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tex = GradientComparison::default();
    for _ in 0..60.min(3 * touched.len()) {
        let t = touched[rng.gen_range(0..touched.len())];
        let c = rng.gen_range(0..3);
        let fd = central(1e-6, &base_vis, |h| {
            let mut a = atlas.clone();
            a.texels_mut()[t][c] += h;
            loss(&field, &a)
        });
        tex.add(step.texels[t][c], fd);
    }
    (jac.error(), tex.error())
}

/// Mean squared difference of encoded normal maps over `cams`.
pub fn normal_map_error(m: &Mesh, target: &Mesh, cams: &[Camera]) -> f64 {
    cams.iter()
        .map(|c| {
            let a = rasterize(m, c).normal;
            let b = rasterize(target, c).normal;
            a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data.len() as f64
        })
        .sum::<f64>()
        / cams.len() as f64
}

/// Held-out cameras spread around the unit sphere's orbit.
pub fn eval_cameras(radius: f64, size: usize) -> Vec<Camera> {
    (0..8)
        .map(|i| {
            Camera::new(
                i as f64 * 0.8 + 0.3,
                ((i % 3) as f64 - 1.0) * 0.4,
                radius,
                45f64.to_radians(),
                size,
                size,
            )
            .unwrap()
        })
        .collect()
}

pub struct Recovery {
    /// Fraction of the initial held-out normal-map error removed.
    pub reduction: f64,
    pub mesh: Mesh,
}

/// Deforms an icosphere toward its anisotropic scaling under analytic normal guidance.
pub fn deformation_recovery(seed: u64, iterations: usize) -> Recovery {
    let base = primitives::icosphere(2);
    let target = primitives::transformed(
        &base,
        &Matrix3::from_diagonal(&Vector3::new(1.5, 1.0, 0.7)),
        Vector3::zeros(),
    );
    let oracle = AnalyticOracle::from_scene(
        TargetScene {
            mesh: target.clone(),
            atlas: None,
            shading: Shading::default(),
        },
        LatentSpec::default(),
    );
    let cfg = Stage1Config {
        iterations,
        views_per_iteration: 12,
        lr_jacobians: 1e-2,
        ..Default::default()
    };
    let cameras = CameraSource::new(&CameraConfig::default(), &base, cfg.render_size, None);
    let solver = PoissonSolver::new(&base).unwrap();
    let schedule = NoiseSchedule::default();
    let ctx = Stage1Context {
        base: &base,
        solver: &solver,
        provider: &oracle,
        prompt: "p",
        config: &cfg,
        cameras: &cameras,
        schedule: &schedule,
        seed,
        diagnostics_dir: None,
    };
    let eval = eval_cameras(2.5 * base.bounding_radius(), 64);
    let e0 = normal_map_error(&base, &target, &eval);
    let mesh = stage1_deform(&ctx, None, &mut |_, _| {}).unwrap().mesh;
    let e1 = normal_map_error(&mesh, &target, &eval);
    Recovery {
        reduction: 1.0 - e1 / e0,
        mesh,
    }
}

pub struct Painted {
    pub min_psnr: f64,
    pub coverage: f64,
}

/// Paints a level-3 icosphere from the default ten views of a checkered reference and
/// compares novel unlit views on covered pixels.
pub fn texture_round_trip() -> Painted {
    let mesh = primitives::icosphere(3);
    let reference = procedural_atlas(&mesh, 1024, |p| checker(p, 4.0));
    let oracle = AnalyticOracle::from_scene(
        TargetScene {
            mesh: mesh.clone(),
            atlas: Some(reference.clone()),
            shading: Shading::unlit(),
        },
        LatentSpec::default(),
    );
    let template = Camera::new(0.0, 0.0, 2.5, 45f64.to_radians(), 512, 512).unwrap();
    let schedule = ViewSchedule::default_ring(&template);
    let mut atlas = generate_atlas(&mesh, 1024, None).unwrap();
    let report = paint(
        &mesh,
        &mut atlas,
        &schedule,
        &oracle,
        "p",
        &ProjectionParams::default(),
        None,
    )
    .unwrap();
    let min_psnr = [(22.5f64, 30f64), (100.0, -40.0), (200.0, 5.0), (300.0, 50.0)]
        .iter()
        .map(|(az, el)| {
            let cam = Camera::new(az.to_radians(), el.to_radians(), 2.5, 45f64.to_radians(), 256, 256).unwrap();
            let fb = rasterize(&mesh, &cam);
            let a = shade_textured(&fb, &mesh, &atlas, &Shading::unlit()).unwrap();
            let b = shade_textured(&fb, &mesh, &reference, &Shading::unlit()).unwrap();
            psnr(&a, &b, Some(&fb.mask))
        })
        .fold(f64::INFINITY, f64::min);
    Painted {
        min_psnr,
        coverage: report.coverage,
    }
}

pub struct Refined {
    pub min_psnr: f64,
    /// Means of consecutive 10-iteration blocks of the per-iteration loss.
    pub block_means: Vec<f64>,
}

impl Refined {
    /// Every block mean is at most the previous one plus 2% of the first.
    pub fn trend_is_monotone(&self) -> bool {
        let slack = 0.02 * self.block_means[0];
        self.block_means.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

/// Joint refinement of a slightly mis-shaped, untextured sphere toward a textured target.
pub fn refinement_recovery(iterations: usize) -> Refined {
    let target = primitives::icosphere(2);
    let reference = procedural_atlas(&target, 256, |p| pattern(p, 3.0));
    let shading = Shading::default();
    let oracle = AnalyticOracle::from_scene(
        TargetScene {
            mesh: target.clone(),
            atlas: Some(reference),
            shading,
        },
        LatentSpec::default(),
    );
    let m1 = primitives::icosphere(2);
    let m1 = primitives::transformed(
        &m1,
        &Matrix3::from_diagonal(&Vector3::new(1.05, 0.95, 1.0)),
        Vector3::zeros(),
    );
    let mut atlas = generate_atlas(&m1, 256, None).unwrap();
    atlas.fill_constant([0.5; 3]);
    let cfg = Stage2Config {
        iterations,
        views_per_iteration: 4,
        ..Default::default()
    };
    let cameras = CameraSource::new(&CameraConfig::default(), &m1, cfg.render_size, None);
    let solver = PoissonSolver::new(&m1).unwrap();
    let ctx = Stage2Context {
        mesh: &m1,
        solver: &solver,
        provider: &oracle,
        prompt: "p",
        config: &cfg,
        cameras: &cameras,
        seed: 5,
    };
    let out = stage2_refine(&ctx, atlas, &mut |_, _| {}).unwrap();
    let losses: Vec<f64> = out.history.iter().map(|h| h.expect("no refiner failures")).collect();
    let block_means = losses
        .chunks(10)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let min_psnr = [(0.3f64, 0.2f64), (2.0, -0.1), (4.0, 0.5)]
        .iter()
        .map(|&(az, el)| {
            let cam = Camera::new(az, el, 2.5, 45f64.to_radians(), 128, 128).unwrap();
            let fb = rasterize(&out.mesh, &cam);
            let a = shade_textured(&fb, &out.mesh, &out.atlas, &shading).unwrap();
            let b = oracle.target_color(&cam).unwrap();
            let target_fb = rasterize(&target, &cam);
            let mask = Mask {
                width: fb.width,
                height: fb.height,
                data: fb
                    .mask
                    .data
                    .iter()
                    .zip(&target_fb.mask.data)
                    .map(|(x, y)| *x || *y)
                    .collect(),
            };
            psnr(&a, &b, Some(&mask))
        })
        .fold(f64::INFINITY, f64::min);
    Refined { min_psnr, block_means }
}

pub const SDS_SPEC: LatentSpec = LatentSpec { h: 4, w: 4, c: 4 };

pub fn sds_latent() -> trimorph::guidance::Tensor {
    let data = (0..SDS_SPEC.h * SDS_SPEC.w * SDS_SPEC.c)
        .map(|i| 0.5 + 0.4 * ((i as f64) * 0.7).sin())
        .collect();
    trimorph::guidance::Tensor::new(SDS_SPEC.shape(), data).unwrap()
}

/// Mean SDS gradient over `draws` draws from seeded streams.
pub fn sds_mean_gradient(provider: &dyn GuidanceProvider, config: &SdsConfig, draws: usize, seed: u64) -> Vec<f64> {
    let schedule = NoiseSchedule::default();
    let x = sds_latent();
    let mut t_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let mut acc = vec![0.0; x.len()];
    for _ in 0..draws {
        let s = sds_gradient(
            &x,
            "p",
            provider,
            config,
            &schedule,
            &mut t_rng,
            &mut n_rng,
            OracleHints::default(),
        )
        .unwrap();
        for (a, g) in acc.iter_mut().zip(&s.gradient.data) {
            *a += g / draws as f64;
        }
    }
    acc
}

/// Exact expectation over the discrete uniform timestep of `w(t) * f(alpha_bar(t))`.
pub fn sds_expectation(config: &SdsConfig, f: impl Fn(f64) -> f64) -> f64 {
    let schedule = NoiseSchedule::default();
    let (lo, hi) = config.timestep_range(&schedule);
    let sum: f64 = (lo..=hi)
        .map(|t| config.weight(&schedule, t) * f(schedule.alpha_bar(t)))
        .sum();
    sum / (hi - lo + 1) as f64
}

/// Largest absolute gradient entry from the perfect denoiser under both weightings.
pub fn sds_perfect_max_abs(draws: usize) -> f64 {
    let p = MockProvider::perfect(SDS_SPEC);
    [WeightMode::One, WeightMode::OneMinusAlphaBar]
        .into_iter()
        .flat_map(|mode| {
            let cfg = SdsConfig {
                weight_mode: mode,
                ..Default::default()
            };
            sds_mean_gradient(&p, &cfg, draws, 3)
        })
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// Relative L2 gap between the Monte-Carlo mean for the linear (echo) mock and its exact
/// expectation `E_t[sqrt(alpha_bar)] x`.
pub fn sds_linear_mock_error(draws: usize, seed: u64) -> f64 {
    let p = MockProvider::new(DenoiseMock::Echo, SDS_SPEC);
    let cfg = SdsConfig {
        weight_mode: WeightMode::One,
        ..Default::default()
    };
    let k = sds_expectation(&cfg, f64::sqrt);
    let x = sds_latent();
    let g = sds_mean_gradient(&p, &cfg, draws, seed);
    let num: f64 = g
        .iter()
        .zip(&x.data)
        .map(|(a, xi)| (a - k * xi).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = x.data.iter().map(|xi| (k * xi).powi(2)).sum::<f64>().sqrt();
    num / den
}
