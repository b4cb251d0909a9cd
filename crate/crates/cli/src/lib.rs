//! The `volsplat` command line: dataset generation, two-stage training,
//! quantization, composition, rendering, editing, inversion, evaluation and
//! the render service.
//!
//! Each subcommand is a plain function taking its parsed arguments so tests
//! can call it without spawning a process.

pub mod args;
pub mod commands;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use volsplat_core::shading::LightConfig;
use volsplat_scene::RenderMode;

use crate::args::{parse_four, parse_light, parse_resolution, parse_rgb, parse_views, ViewCount};
pub use crate::error::{Failure, Result};

#[derive(Debug, Parser)]
#[command(name = "volsplat", version, about = "Editable Gaussian splats of direct-volume-rendered scenes")]
pub struct Cli {
    /// Worker threads for the rasterizer and the ray marcher (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a ground-truth dataset per basic transfer function with the reference ray marcher.
    GenData(GenDataArgs),
    /// Train a base model and then its editable model from one dataset.
    Train(TrainArgs),
    /// Vector-quantize an editable model.
    Quantize(QuantizeArgs),
    /// Concatenate editable models (or composed scenes) into one composed scene.
    Compose(ComposeArgs),
    /// Render one image of a model or composed scene.
    Render(RenderArgs),
    /// Change palette, opacity or lighting edits of a composed scene.
    Edit(EditArgs),
    /// Fit palette, opacity and lighting edits so a render matches a reference image.
    Invert(InvertArgs),
    /// Compare renders against a dataset: PSNR and SSIM per view, optional L*u*v* heatmaps.
    Eval(EvalArgs),
    /// Serve a scene over HTTP and WebSocket.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Volume: `shells`, `ml` or `vortex` with optional `:dims=N,wobble=X`, or a raw f32 grid file with a `<file>.json` sidecar.
    #[arg(long, value_name = "SPEC")]
    pub volume: String,
    /// Transfer functions: a JSON file with one TF or an array of TFs, or `shells` for the two nested-shell TFs.
    #[arg(long, value_name = "FILE")]
    pub tf: String,
    /// Output directory; with several TFs each gets a subdirectory named after it.
    #[arg(long)]
    pub out: PathBuf,
    /// Training views per TF: `auto` picks 42, 92 or 162 from a 12-view entropy probe; otherwise 12, 42, 92, 162, 642, ...
    #[arg(long, default_value = "auto", value_parser = parse_views)]
    pub views: ViewCount,
    /// Image size as WxH.
    #[arg(long, default_value = "128x128", value_parser = parse_resolution)]
    pub res: (u32, u32),
    /// Light: `headlight` or `orbital:POLAR,AZIMUTH` in degrees.
    #[arg(long, default_value = "headlight", value_parser = parse_light)]
    pub light: LightConfig,
    /// Held-out evaluation views per TF, written to `heldout/` (0 disables).
    #[arg(long, default_value_t = 20, value_name = "N")]
    pub heldout: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory from gen-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Output path of the editable model.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON training config; flags below override its fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Base-stage (spherical harmonics) iterations.
    #[arg(long, value_name = "N")]
    pub stage1_iters: Option<usize>,
    /// Editable-stage iterations.
    #[arg(long, value_name = "N")]
    pub stage2_iters: Option<usize>,
    /// Base-stage iterations per spherical-harmonics degree increase.
    #[arg(long, value_name = "N")]
    pub sh_interval: Option<usize>,
    /// Number of initial primitives.
    #[arg(long, value_name = "N")]
    pub init_count: Option<usize>,
    /// Random seed for initialization, view order and densification.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Single-threaded rendering (bit-reproducible).
    #[arg(long)]
    pub sequential: bool,
    /// Held-out dataset for logged PSNR (default: `<data>/heldout` when present).
    #[arg(long, value_name = "DIR")]
    pub eval: Option<PathBuf>,
    /// Also save the base-stage model here.
    #[arg(long, value_name = "FILE")]
    pub base_out: Option<PathBuf>,
    /// Training log as JSON lines.
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// Editable model file.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Output path of the quantized model.
    #[arg(long)]
    pub out: PathBuf,
    /// Codebook size per attribute.
    #[arg(long, default_value_t = 256)]
    pub k: usize,
    /// Seed for k-means initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Editable models or composed scenes, in order.
    #[arg(long = "in", value_name = "FILE", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output path of the composed scene.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Model or composed scene file.
    #[arg(long)]
    pub model: PathBuf,
    /// Camera: `orbit:POLAR,AZIMUTH[,RADIUS[,W[,H]]]` in degrees, inline camera JSON, a camera JSON file, or `manifest.json#INDEX`.
    #[arg(long)]
    pub camera: String,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Render mode: shaded, normal, ambient, diffuse, specular, depth or alpha.
    #[arg(long, default_value = "shaded")]
    pub mode: RenderMode,
    /// Override the light: `headlight` or `orbital:POLAR,AZIMUTH` in degrees.
    #[arg(long, value_parser = parse_light)]
    pub light: Option<LightConfig>,
    /// Single-threaded rendering.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    /// Editable model or composed scene file.
    #[arg(long)]
    pub model: PathBuf,
    /// Index of the basic scene that --palette, --reset-palette and --opacity-scale apply to.
    #[arg(long, value_name = "IDX")]
    pub scene: Option<usize>,
    /// New palette color as r,g,b in [0, 1].
    #[arg(long, value_parser = parse_rgb, value_name = "R,G,B")]
    pub palette: Option<[f32; 3]>,
    /// Go back to the trained palette color.
    #[arg(long, conflicts_with = "palette")]
    pub reset_palette: bool,
    /// Opacity multiplier (>= 0).
    #[arg(long, value_name = "X")]
    pub opacity_scale: Option<f32>,
    /// Light: `headlight` or `orbital:POLAR,AZIMUTH` in degrees (keeps the term scales).
    #[arg(long, value_parser = parse_light)]
    pub light: Option<LightConfig>,
    /// Global multipliers on ambient, diffuse, specular and shininess.
    #[arg(long, value_parser = parse_four, value_name = "A,D,S,B", allow_hyphen_values = true)]
    pub term_scales: Option<[f64; 4]>,
    /// Global offsets on ambient, diffuse, specular and shininess.
    #[arg(long, value_parser = parse_four, value_name = "A,D,S,B", allow_hyphen_values = true)]
    pub term_bias: Option<[f64; 4]>,
    /// Output path of the edited scene.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    /// Editable model or composed scene file.
    #[arg(long)]
    pub model: PathBuf,
    /// Reference PNG (straight alpha).
    #[arg(long, value_name = "PNG")]
    pub reference: PathBuf,
    /// Camera of the reference, in any form `render --camera` accepts; its size must match the PNG.
    #[arg(long)]
    pub camera: String,
    /// Optimizer iterations.
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Single-threaded rendering (bit-reproducible).
    #[arg(long)]
    pub sequential: bool,
    /// Output path of the scene with the fitted edits.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the fitted render here.
    #[arg(long, value_name = "PNG")]
    pub render: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model or composed scene file.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory (its manifest light is used for rendering).
    #[arg(long)]
    pub data: PathBuf,
    /// JSON report path.
    #[arg(long)]
    pub report: PathBuf,
    /// Directory for per-view L*u*v* difference heatmaps.
    #[arg(long, value_name = "DIR")]
    pub heatmaps: Option<PathBuf>,
    /// Single-threaded rendering.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    /// Port to listen on.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Scene to load at startup.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Single-threaded rendering.
    #[arg(long)]
    pub sequential: bool,
}

/// Runs a parsed command; the JSON summary goes to stdout.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::invalid("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new("ThreadPool", e.to_string()))?;
    }
    let summary = match cli.command {
        Command::GenData(a) => commands::gen_data(&a)?,
        Command::Train(a) => commands::train(&a)?,
        Command::Quantize(a) => commands::quantize(&a)?,
        Command::Compose(a) => commands::compose(&a)?,
        Command::Render(a) => commands::render(&a)?,
        Command::Edit(a) => commands::edit(&a)?,
        Command::Invert(a) => commands::invert(&a)?,
        Command::Eval(a) => commands::eval(&a)?,
        Command::Serve(a) => commands::serve(&a)?,
    };
    println!("{summary}");
    Ok(())
}
