//! `nocturne`: kernel inspection, scene synthesis, dataset construction and
//! evaluation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nocturne::alsf::KernelFamily;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "nocturne", version, about = "Light-pollution synthesis for night cityscapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an APSF/ALSF pair and write heatmaps, field and cross-sections.
    Kernel(KernelArgs),
    /// Synthesize one polluted image from a scene directory.
    Synth(SynthArgs),
    /// Build a paired dataset from a directory of scenes.
    Dataset(DatasetArgs),
    /// Score (restored, reference) image pairs listed in a CSV file.
    Eval(EvalArgs),
    /// Threshold a clean image into a light-source map.
    ExtractLights(ExtractArgs),
}

#[derive(Args, Debug)]
struct KernelArgs {
    /// Preset family to sample from.
    #[arg(long, default_value = "upward", value_parser = parse_family)]
    family: KernelFamily,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image width the kernel size is drawn for.
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    /// Optical thickness.
    #[arg(long = "T")]
    optical_thickness: Option<f64>,
    /// Forward scattering parameter.
    #[arg(long = "q")]
    forward_scatter: Option<f64>,
    /// Kernel size (odd).
    #[arg(long)]
    size: Option<usize>,
    /// Beam amplitude, applied to every beam.
    #[arg(long = "A")]
    amplitude: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Beam directions in degrees; replaces the sampled beams.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    alpha: Vec<f64>,
    /// Beam spreads in degrees: one for all beams or one per beam.
    #[arg(long, value_delimiter = ',')]
    sigma: Vec<f64>,
    #[arg(long)]
    no_renormalize: bool,
    /// Also write the sampled radial profile.
    #[arg(long)]
    profile: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Clip {
    Clamp,
    None,
}

/// Options shared by `synth` and `dataset`.
#[derive(Args, Debug)]
struct SynthOptions {
    /// JSON synthesis configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Derive lights from the clean image instead of reading lights.png.
    #[arg(long)]
    extract_lights: bool,
    /// Luminance threshold for --extract-lights.
    #[arg(long, default_value_t = 0.8)]
    tau: f64,
    #[arg(long, value_enum)]
    clip: Option<Clip>,
    /// Composite in linear light (gamma 2.2) instead of stored values.
    #[arg(long)]
    linear: bool,
    #[arg(long)]
    no_renormalize: bool,
    /// Also write the three unscaled layers.
    #[arg(long)]
    emit_layers: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Directory with clean.png, sky_mask.png and lights.png.
    scene: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed layer gains `sky,alsf,apsf`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    gains: Option<Vec<f64>>,
    #[command(flatten)]
    options: SynthOptions,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DatasetArgs {
    /// Directory of scene directories.
    root: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Polluted variants per scene.
    #[arg(long, default_value_t = nocturne::dataset::DEFAULT_VARIANTS)]
    variants: usize,
    #[arg(long, env = "NOCTURNE_WORKERS")]
    workers: Option<usize>,
    #[command(flatten)]
    options: SynthOptions,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// CSV with `restored,reference` rows; a header row is optional.
    pairs: PathBuf,
    /// Directory for metrics.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    image: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_family(s: &str) -> Result<KernelFamily, String> {
    s.parse().map_err(|e: nocturne::Error| e.to_string())
}

fn error_json(err: &anyhow::Error) -> serde_json::Value {
    let mut value = json!({ "error": "failure", "message": format!("{err:#}") });
    if let Some(e) = err.chain().find_map(|e| e.downcast_ref::<nocturne::Error>()) {
        value["error"] = json!(e.kind());
        if let nocturne::Error::InvalidParameter { field, .. } = e {
            value["field"] = json!(field);
        }
    }
    value
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let value = json!({ "error": "usage", "message": e.to_string().trim_end() });
            eprintln!("{value}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Kernel(args) => commands::kernel(args),
        Command::Synth(args) => commands::synth(args),
        Command::Dataset(args) => commands::dataset(args),
        Command::Eval(args) => commands::eval(args),
        Command::ExtractLights(args) => commands::extract_lights(args),
    };
    match result {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::FAILURE
        }
    }
}
