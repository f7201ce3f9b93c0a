//! Acceptance report: one PASS/FAIL line per criterion, nonzero exit if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::checks;
use sha2::{Digest, Sha256};
use trimorph::guidance::{AnalyticOracle, LatentSpec, TargetScene};
use trimorph::mesh::{primitives, save_mesh};
use trimorph::pipeline::{run_full, PipelineConfig};
use trimorph::render::Shading;
use trimorph::texture::generate_atlas;

/// Outcome of one criterion: pass flag and a one-line summary of the measured values.
type Outcome = (bool, String);

fn identity_map() -> Outcome {
    let dev = checks::identity_deviation();
    (dev < 1e-6, format!("max deviation {dev:.2e} x radius (limit 1e-6)"))
}

fn poisson_oracle() -> Outcome {
    let err = checks::poisson_oracle_error(20, 11);
    (
        err < 1e-8,
        format!("20 meshes, max relative gap {err:.2e} (limit 1e-8)"),
    )
}

fn gradient_suite() -> Outcome {
    let adjoint = [5, 6].map(checks::adjoint_fd_error).into_iter().fold(0.0, f64::max);
    let render = (0..3).map(checks::render_fd_error).fold(0.0, f64::max);
    let deform = checks::e2e_deformation_error();
    let (refine_j, refine_t) = checks::e2e_refinement_errors();
    let e2e = deform.max(refine_j).max(refine_t);
    (
        adjoint < 1e-4 && render < 1e-3 && e2e < 1e-3,
        format!(
            "(a) adjoint {adjoint:.2e} (limit 1e-4), (b) renderer {render:.2e}, (c) end-to-end {e2e:.2e} (limits 1e-3)"
        ),
    )
}

fn deformation_recovery() -> Outcome {
    let a = checks::deformation_recovery(1, 400);
    let b = checks::deformation_recovery(1, 400);
    let same = a.mesh.vertices() == b.mesh.vertices();
    (
        a.reduction >= 0.80 && same,
        format!(
            "normal-map error reduced {:.1}% (limit 80%), repeat run identical: {same}",
            100.0 * a.reduction
        ),
    )
}

fn texture_round_trip() -> Outcome {
    let r = checks::texture_round_trip();
    (
        r.min_psnr >= 25.0 && r.coverage >= 0.95,
        format!(
            "worst novel-view PSNR {:.2} dB (limit 25), coverage {:.2}% (limit 95%)",
            r.min_psnr,
            100.0 * r.coverage
        ),
    )
}

fn refinement_recovery() -> Outcome {
    let r = checks::refinement_recovery(300);
    let monotone = r.trend_is_monotone();
    (
        r.min_psnr >= 22.0 && monotone,
        format!(
            "worst view PSNR {:.2} dB (limit 22), smoothed loss {:.2e} -> {:.2e}, monotone: {monotone}",
            r.min_psnr,
            r.block_means[0],
            r.block_means.last().unwrap()
        ),
    )
}

fn sds_algebra() -> Outcome {
    let zero = checks::sds_perfect_max_abs(100);
    let mc = checks::sds_linear_mock_error(10_000, 17);
    (
        zero == 0.0 && mc < 0.05,
        format!(
            "perfect mock max |g| = {zero:e}, linear mock Monte-Carlo gap {:.2}% (limit 5%)",
            100.0 * mc
        ),
    )
}

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

fn determinism_and_formats() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ball.obj");
    let base = primitives::icosphere(1);
    save_mesh(&input, &base, None, None).unwrap();
    let target = primitives::transformed(
        &base,
        &nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(1.2, 1.0, 0.9)),
        nalgebra::Vector3::zeros(),
    );
    let atlas = common::procedural_atlas(&target, 256, |p| common::pattern(p, 3.0));
    let oracle = AnalyticOracle::from_scene(
        TargetScene {
            mesh: target,
            atlas: Some(atlas),
            shading: Shading::default(),
        },
        LatentSpec::default(),
    );
    let run = |name: &str| {
        let mut cfg = PipelineConfig {
            seed: 7,
            ..Default::default()
        };
        cfg.input.mesh = input.clone();
        cfg.stage1.iterations = 20;
        cfg.texture.resolution = 256;
        cfg.texture.render_size = 128;
        cfg.stage2.iterations = 20;
        cfg.output.dir = dir.path().join(name);
        cfg.output.turntable_size = 64;
        run_full(&cfg, &oracle).unwrap();
        cfg.output.dir
    };
    let (a, b) = (run("a"), run("b"));
    let files = ["mesh.obj", "mesh.mtl", "mesh.png"];
    let identical = files.iter().all(|f| digest(&a.join(f)) == digest(&b.join(f)));

    let (models, materials) = tobj::load_obj(a.join("mesh.obj"), &tobj::LoadOptions::default()).unwrap();
    let m = &models[0].mesh;
    let run_ok = m.positions.len() == 3 * base.vertex_count()
        && m.indices.len() == 3 * base.face_count()
        && materials.is_ok_and(|mats| mats[0].diffuse_texture.as_deref() == Some("mesh.png"));

    let cube = primitives::cube();
    let cube_path = dir.path().join("cube.obj");
    let cube_atlas = generate_atlas(&cube, 64, None).unwrap();
    save_mesh(
        &cube_path,
        &cube,
        Some(cube_atlas.uvs()),
        Some(&cube_atlas.texel_image()),
    )
    .unwrap();
    let (models, _) = tobj::load_obj(&cube_path, &tobj::LoadOptions::default()).unwrap();
    let c = &models[0].mesh;
    let p = |i: u32| {
        let i = 3 * i as usize;
        nalgebra::Vector3::new(
            c.positions[i] as f64,
            c.positions[i + 1] as f64,
            c.positions[i + 2] as f64,
        )
    };
    let area: f64 = c
        .indices
        .chunks(3)
        .map(|f| 0.5 * (p(f[1]) - p(f[0])).cross(&(p(f[2]) - p(f[0]))).norm())
        .sum();
    let cube_ok = c.positions.len() == 24 && c.indices.len() == 36 && (area - 6.0).abs() < 1e-6;

    (
        identical && run_ok && cube_ok,
        format!("SHA-256 identical over two runs: {identical}, run OBJ readable: {run_ok}, cube 8/12/area {area:.4}: {cube_ok}"),
    )
}

struct Criterion {
    name: &'static str,
    limit: Duration,
    check: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "identity map",
            limit: Duration::from_secs(5),
            check: identity_map,
        },
        Criterion {
            name: "poisson oracle",
            limit: Duration::from_secs(30),
            check: poisson_oracle,
        },
        Criterion {
            name: "gradient suite",
            limit: Duration::from_secs(120),
            check: gradient_suite,
        },
        Criterion {
            name: "deformation recovery",
            limit: Duration::from_secs(300),
            check: deformation_recovery,
        },
        Criterion {
            name: "texture round trip",
            limit: Duration::from_secs(120),
            check: texture_round_trip,
        },
        Criterion {
            name: "refinement recovery",
            limit: Duration::from_secs(300),
            check: refinement_recovery,
        },
        Criterion {
            name: "sds algebra",
            limit: Duration::from_secs(60),
            check: sds_algebra,
        },
        Criterion {
            name: "determinism and formats",
            limit: Duration::from_secs(300),
            check: determinism_and_formats,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.check));
        let elapsed = t0.elapsed();
        let (ok, detail) = outcome.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        let in_time = elapsed <= c.limit;
        let pass = ok && in_time;
        failed += usize::from(!pass);
        println!(
            "{} {:<24} {detail}; {:.1} s (limit {} s)",
            if pass { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
