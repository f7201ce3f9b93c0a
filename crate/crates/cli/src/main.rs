//! `trimorph`: run the deformation, texturing and refinement stages from the command line.
//!
//! Results go to stdout as JSON; logs and errors go to stderr. Exit codes: 0 success,
//! 1 usage error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use trimorph::mesh::load_mesh;
use trimorph::pipeline::{
    build_provider, load_textured, render_turntable, run_full, run_refine, run_stage1, run_texture, PipelineConfig,
    PipelineError, RunReport,
};

#[derive(Debug, Parser)]
#[command(name = "trimorph", version, about = "Text-guided mesh deformation and texturing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Pipeline configuration (JSON)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `seed`
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.dir`
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides `guidance.source`: analytic:DIR, remote:URL or mock
    #[arg(long, global = true, value_name = "SOURCE")]
    guidance: Option<String>,
    /// Worker threads (default: all logical cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deform the input mesh only
    Deform,
    /// Texture the input mesh as given
    Texture,
    /// Refine a textured input mesh
    Refine,
    /// Deform, texture and refine
    Run,
    /// Render a turntable strip of a textured OBJ
    Render { mesh: PathBuf },
    /// Print mesh statistics as JSON
    Inspect { mesh: PathBuf },
}

enum Failure {
    Usage(String),
    Runtime(PipelineError),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Self::Runtime(e)
    }
}

fn error_kind(e: &PipelineError) -> &'static str {
    match e {
        PipelineError::Config(_) => "config",
        PipelineError::Mesh(_) => "mesh",
        PipelineError::Solver(_) => "solver",
        PipelineError::Render(_) => "render",
        PipelineError::Texture(_) => "texture",
        PipelineError::Guidance(_) => "guidance",
        PipelineError::Image(_) => "image",
        PipelineError::NonFinite { .. } => "non_finite",
        PipelineError::RefinerFailures { .. } => "refiner_failures",
        PipelineError::Io { .. } => "io",
    }
}

fn error_json(e: &PipelineError) -> Value {
    let mut v = json!({ "error": error_kind(e), "message": e.to_string() });
    if let PipelineError::NonFinite {
        stage,
        iteration,
        camera,
        ..
    } = e
    {
        v["stage"] = json!(stage);
        v["iteration"] = json!(iteration);
        v["camera"] = serde_json::to_value(camera.as_ref()).unwrap_or(Value::Null);
    }
    v
}

/// Config from `--config` (or defaults when `required` is false) with flags applied on top.
fn resolve_config(g: &Global, required: bool) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None if required => return Err(Failure::Usage("--config is required for this command".into())),
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.output.dir = out.clone();
    }
    if let Some(src) = &g.guidance {
        cfg.guidance.source = src.clone();
    }
    if g.threads.is_some() {
        cfg.threads = g.threads;
    }
    cfg.output.verbose |= g.verbose;
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
}

fn report_json(r: &RunReport) -> Value {
    serde_json::to_value(r).expect("report serializes")
}

fn inspect(path: &Path) -> Result<Value, Failure> {
    let data = load_mesh(path).map_err(PipelineError::from)?;
    let mesh = &data.mesh;
    let (lo, hi) = mesh.bounding_box();
    let (_, components) = mesh.connected_components();
    // Fraction of the unit UV square covered by UV triangles, assuming no overlap.
    let uv_coverage = data.uvs.as_ref().map(|uvs| {
        uvs.iter()
            .map(|[a, b, c]| 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs())
            .sum::<f64>()
    });
    Ok(json!({
        "path": path,
        "n": mesh.vertex_count(),
        "m": mesh.face_count(),
        "area": mesh.total_area(),
        "bbox": { "min": [lo.x, lo.y, lo.z], "max": [hi.x, hi.y, hi.z] },
        "components": components,
        "uv_coverage": uv_coverage,
    }))
}

fn run(cli: &Cli) -> Result<Value, Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Inspect { mesh } => inspect(mesh),
        Command::Render { mesh } => {
            let cfg = resolve_config(g, false)?;
            init_threads(cfg.threads);
            let (mesh, atlas) = load_textured(mesh)?;
            let strip = render_turntable(&cfg, &mesh, &atlas, &cfg.stage2.shading)?;
            let dir = &cfg.output.dir;
            std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
                path: dir.clone(),
                source,
            })?;
            let path = dir.join("turntable.png");
            strip.save_png(&path).map_err(PipelineError::from)?;
            Ok(json!({ "outputs": [path] }))
        }
        stage => {
            let cfg = resolve_config(g, true)?;
            init_threads(cfg.threads);
            let provider = build_provider(&cfg.guidance, cfg.stage1.latent)?;
            let report = match stage {
                Command::Deform => run_stage1(&cfg, provider.as_ref())?,
                Command::Texture => run_texture(&cfg, provider.as_ref())?,
                Command::Refine => run_refine(&cfg, provider.as_ref())?,
                _ => run_full(&cfg, provider.as_ref())?,
            };
            Ok(report_json(&report))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();

    match run(&cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            use clap::CommandFactory;
            eprintln!("error: {msg}\n");
            let _ = Cli::command().write_long_help(&mut std::io::stderr());
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(2)
        }
    }
}
