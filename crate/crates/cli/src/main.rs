use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spaceblender::backends::synthetic::{SyntheticScene, SCENE_IDS};
use spaceblender::blend::run_pipeline;
use spaceblender::config::{BackendMode, ConditioningWeights, ExportFormat, PipelineConfig};
use spaceblender::export::export_mesh;
use spaceblender::manifest::RunManifest;
use spaceblender::trajectory::trajectory_to_json;

#[derive(Parser)]
#[command(name = "spaceblender", version, about = "Blend room photographs into one navigable 3D mesh")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and export the blended mesh.
    Run(RunArgs),
    /// Render a built-in synthetic room to a 16-bit PNG.
    Scene {
        /// One of the built-in scene ids.
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; individual flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated input images.
    #[arg(long, value_delimiter = ',')]
    images: Vec<PathBuf>,
    /// Layout circle diameter, meters.
    #[arg(long)]
    diameter: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Conditioning weights as LAYOUT,DEPTH,SEMANTIC.
    #[arg(long)]
    weights: Option<ConditioningWeights>,
    /// synthetic or remote.
    #[arg(long)]
    backend: Option<BackendMode>,
    /// Inpainting server URL for the remote backend.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    theme: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// obj, ply or gltf; defaults to the output file's extension.
    #[arg(long)]
    format: Option<ExportFormat>,
    /// Write per-iteration images here.
    #[arg(long)]
    debug_dir: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> spaceblender::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if !self.images.is_empty() {
            cfg.input_paths = self.images;
        }
        if let Some(d) = self.diameter {
            cfg.diameter_m = d;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.weights {
            cfg.weights = w;
        }
        if let Some(b) = self.backend {
            cfg.backend = b;
        }
        if self.endpoint.is_some() {
            cfg.endpoint = self.endpoint;
        }
        if let Some(t) = self.theme {
            cfg.theme = t;
        }
        let out_given = self.out.is_some();
        if let Some(o) = self.out {
            cfg.output_path = o;
        }
        match self.format {
            Some(f) => cfg.export_format = f,
            None if out_given => {
                if let Some(f) = ExportFormat::from_path(&cfg.output_path) {
                    cfg.export_format = f;
                }
            }
            None => {}
        }
        if self.debug_dir.is_some() {
            cfg.debug_dir = self.debug_dir;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scene".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn run(cfg: &PipelineConfig) -> spaceblender::Result<()> {
    let backends = cfg.backends()?;
    let output = run_pipeline(cfg, &backends)?;
    export_mesh(&output.mesh, &cfg.output_path, cfg.export_format)?;
    RunManifest::new(cfg, &backends, &output)?.save(sidecar(&cfg.output_path, "manifest.json"))?;
    std::fs::write(sidecar(&cfg.output_path, "trajectory.json"), trajectory_to_json(&output.plan.steps)?)?;
    log::info!("wrote {}", cfg.output_path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = match args.into_config() {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run(&cfg) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Scene { id, size, out } => {
            let scene = match SyntheticScene::by_id(&id) {
                Ok(s) => s,
                Err(_) => {
                    eprintln!("error: unknown scene {id:?}; expected one of {}", SCENE_IDS.join(", "));
                    return ExitCode::from(2);
                }
            };
            match scene.render(&scene.capture_camera(size, size)).color.save_png16(&out) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
