//! The HTTP client against an in-test server that serves providers through `wire::handle`.

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trimorph::guidance::{
    wire, AnalyticOracle, Capability, DenoiseMock, DenoiseRequest, GuidanceError, GuidanceProvider, LatentSpec,
    MockProvider, OracleHints, RemoteOptions, RemoteProvider, TargetScene, TargetView, Tensor,
};
use trimorph::mesh::primitives;
use trimorph::pipeline::{
    stage1_deform, stage2_refine, CameraConfig, CameraSource, Stage1Config, Stage1Context, Stage2Config, Stage2Context,
};
use trimorph::render::{Camera, Shading};
use trimorph::texture::{generate_atlas, paint, ProjectionParams, ViewSchedule};
use trimorph::PoissonSolver;

struct Bridge {
    url: String,
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
    hits: Arc<AtomicUsize>,
}

impl Drop for Bridge {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Serves `provider`; the first `fail_first` requests are answered with `fail_status`.
fn serve(provider: Arc<dyn GuidanceProvider>, fail_first: usize, fail_status: u16) -> Bridge {
    let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
    let port = server.server_addr().to_ip().unwrap().port();
    let hits = Arc::new(AtomicUsize::new(0));
    let (srv, counter) = (server.clone(), hits.clone());
    let thread = std::thread::spawn(move || {
        for mut req in srv.incoming_requests() {
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, body) = if n < fail_first {
                (fail_status, r#"{"error":"injected failure"}"#.to_string())
            } else {
                let mut body = String::new();
                req.as_reader().read_to_string(&mut body).unwrap();
                let method = req.method().as_str().to_string();
                wire::handle(provider.as_ref(), &method, req.url(), &body)
            };
            let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
            let _ = req.respond(
                tiny_http::Response::from_string(body)
                    .with_status_code(status)
                    .with_header(header),
            );
        }
    });
    Bridge {
        url: format!("http://127.0.0.1:{port}"),
        server,
        thread: Some(thread),
        hits,
    }
}

fn fast_options(max_attempts: u32) -> RemoteOptions {
    RemoteOptions {
        timeout: Duration::from_secs(10),
        max_attempts,
        backoff: Duration::from_millis(20),
    }
}

fn scene_oracle() -> AnalyticOracle {
    let mesh = primitives::icosphere(2);
    let atlas = common::procedural_atlas(&mesh, 256, |p| common::pattern(p, 3.0));
    AnalyticOracle::from_scene(
        TargetScene {
            mesh,
            atlas: Some(atlas),
            shading: Shading::default(),
        },
        LatentSpec::default(),
    )
}

#[test]
fn handshake_reports_capabilities_and_cameras() {
    let cam = Camera::new(0.3, 0.2, 2.5, 0.8, 8, 8).unwrap();
    let views = vec![TargetView {
        camera: cam.clone(),
        color: trimorph::Image::filled(8, 8, 3, 0.25),
        normal: None,
    }];
    let oracle = AnalyticOracle::new(
        trimorph::guidance::TargetSource::Views(views),
        LatentSpec { h: 8, w: 8, c: 4 },
    );
    let bridge = serve(Arc::new(oracle), 0, 500);
    let remote = RemoteProvider::connect(&bridge.url, fast_options(1)).unwrap();
    assert_eq!(remote.capabilities(), Capability::ALL.to_vec());
    assert_eq!(remote.latent_spec(), LatentSpec { h: 8, w: 8, c: 4 });
    assert_eq!(remote.registered_cameras(), Some(vec![cam]));
}

/// Deformation, painting and refinement over `provider`, returning every output value.
fn mini_pipeline(provider: &dyn GuidanceProvider) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let base = primitives::icosphere(1);
    let solver = PoissonSolver::new(&base).unwrap();
    let schedule = Default::default();
    let s1 = Stage1Config {
        iterations: 3,
        views_per_iteration: 4,
        ..Default::default()
    };
    let cams = CameraSource::new(&CameraConfig::default(), &base, 64, None);
    let ctx = Stage1Context {
        base: &base,
        solver: &solver,
        provider,
        prompt: "a vase",
        config: &s1,
        cameras: &cams,
        schedule: &schedule,
        seed: 4,
        diagnostics_dir: None,
    };
    let out1 = stage1_deform(&ctx, None, &mut |_, _| {}).unwrap();
    let m1 = out1.mesh;

    let mut atlas = generate_atlas(&m1, 128, None).unwrap();
    let template = Camera::new(0.0, 0.0, 2.5, 0.8, 48, 48).unwrap();
    let views = ViewSchedule::new(ViewSchedule::default_ring(&template).cameras()[..3].to_vec()).unwrap();
    paint(
        &m1,
        &mut atlas,
        &views,
        provider,
        "a vase",
        &ProjectionParams::default(),
        None,
    )
    .unwrap();
    let painted: Vec<f64> = atlas.texels().iter().flatten().copied().collect();

    let solver1 = PoissonSolver::new(&m1).unwrap();
    let s2 = Stage2Config {
        iterations: 3,
        render_size: 48,
        ..Default::default()
    };
    let cams2 = CameraSource::new(&CameraConfig::default(), &m1, 48, None);
    let ctx2 = Stage2Context {
        mesh: &m1,
        solver: &solver1,
        provider,
        prompt: "a vase",
        config: &s2,
        cameras: &cams2,
        seed: 4,
    };
    let out2 = stage2_refine(&ctx2, atlas, &mut |_, _| {}).unwrap();
    let positions: Vec<f64> = out2.mesh.vertices().iter().flat_map(|v| [v.x, v.y, v.z]).collect();
    let texels = out2.atlas.texels().iter().flatten().copied().collect();
    (
        m1.vertices().iter().flat_map(|v| [v.x, v.y, v.z]).collect(),
        painted,
        [positions, texels].concat(),
    )
}

#[test]
fn loopback_matches_in_process_bit_for_bit() {
    let oracle = Arc::new(scene_oracle());
    let local = mini_pipeline(oracle.as_ref());
    let bridge = serve(oracle.clone(), 0, 500);
    let remote = RemoteProvider::connect(&bridge.url, fast_options(1)).unwrap();
    let over_wire = mini_pipeline(&remote);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&local.0), bits(&over_wire.0), "deformed mesh");
    assert_eq!(bits(&local.1), bits(&over_wire.1), "painted atlas");
    assert_eq!(bits(&local.2), bits(&over_wire.2), "refined mesh and atlas");
    // Deformation actually moved the mesh, so the comparison is not vacuous.
    let base = primitives::icosphere(1);
    let moved = local
        .0
        .iter()
        .zip(base.vertices().iter().flat_map(|v| [v.x, v.y, v.z]))
        .any(|(a, b)| (a - b).abs() > 1e-6);
    assert!(moved);
}

#[test]
fn echoed_tensor_survives_the_wire_byte_for_byte() {
    let spec = LatentSpec { h: 16, w: 16, c: 4 };
    let bridge = serve(Arc::new(MockProvider::new(DenoiseMock::Echo, spec)), 0, 500);
    let remote = RemoteProvider::connect(&bridge.url, fast_options(1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let latent = trimorph::guidance::sample_noise(&mut rng, spec.shape());
    let req = DenoiseRequest {
        latent: latent.clone(),
        t: 500,
        prompt: "x".into(),
        guidance_scale: 7.5,
        hints: OracleHints::default(),
    };
    let back = remote.denoise(&req).unwrap();
    assert_eq!(back.shape, latent.shape);
    let bytes = |t: &Tensor| {
        t.data
            .iter()
            .flat_map(|v| (*v as f32).to_le_bytes())
            .collect::<Vec<u8>>()
    };
    assert_eq!(bytes(&back), bytes(&latent));
    assert_eq!(back.data, latent.data);
}

#[test]
fn server_errors_are_retried_with_backoff() {
    let provider: Arc<dyn GuidanceProvider> = Arc::new(MockProvider::perfect(LatentSpec::default()));
    let bridge = serve(provider.clone(), 2, 500);
    let t0 = Instant::now();
    let remote = RemoteProvider::connect(&bridge.url, fast_options(3)).unwrap();
    assert!(t0.elapsed() >= Duration::from_millis(60), "20 ms + 40 ms of backoff");
    assert_eq!(bridge.hits.load(Ordering::SeqCst), 3);
    assert_eq!(remote.latent_spec(), LatentSpec::default());

    let bridge = serve(provider, 3, 503);
    let err = RemoteProvider::connect(&bridge.url, fast_options(3)).unwrap_err();
    assert!(
        matches!(err.root(), GuidanceError::Http { status: Some(503), .. }),
        "{err}"
    );
    assert_eq!(bridge.hits.load(Ordering::SeqCst), 3);
    assert_eq!(fast_options(3).backoff_total(), Duration::from_millis(60));
}

#[test]
fn client_errors_fail_fast_but_429_is_retried() {
    let provider: Arc<dyn GuidanceProvider> = Arc::new(MockProvider::perfect(LatentSpec::default()));
    let bridge = serve(provider.clone(), 5, 400);
    let err = RemoteProvider::connect(&bridge.url, fast_options(3)).unwrap_err();
    assert!(matches!(err.root(), GuidanceError::Http { status: Some(400), .. }));
    assert_eq!(bridge.hits.load(Ordering::SeqCst), 1);

    let bridge = serve(provider, 1, 429);
    assert!(RemoteProvider::connect(&bridge.url, fast_options(2)).is_ok());
    assert_eq!(bridge.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn provider_errors_carry_status_and_message() {
    let oracle = Arc::new(scene_oracle());
    let bridge = serve(oracle, 0, 500);
    let remote = RemoteProvider::connect(&bridge.url, fast_options(3)).unwrap();
    // No camera hint: the oracle cannot answer and the bridge says 400, which is not retried.
    let req = trimorph::guidance::RefineRequest {
        image: Tensor::zeros(vec![8, 8, 3]),
        prompt: "x".into(),
        steps: 2,
        hints: OracleHints::default(),
    };
    let err = remote.refine(&req).unwrap_err();
    match err.root() {
        GuidanceError::Http { status, message } => {
            assert_eq!(*status, Some(400));
            assert!(message.contains("camera"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(bridge.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let err = RemoteProvider::connect(&format!("http://127.0.0.1:{port}"), fast_options(2)).unwrap_err();
    assert!(matches!(err.root(), GuidanceError::Http { status: None, .. }), "{err}");
}
