use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use facefill::editing::Interpolation;
use facefill::{ConstraintKind, Segment};

#[derive(Debug, Parser)]
#[command(name = "facefill", version, about = "Generative inpainting of facial blendshape animation")]
pub struct Cli {
    /// Log level (error, warn, info, debug, trace); RUST_LOG overrides it.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus (clean, noisy and phoneme files plus a manifest).
    Synth(SynthArgs),
    /// Train a generator/critic pair for one constraint kind.
    Train(TrainArgs),
    /// Fill the segments of an edit spec with a trained model or a baseline.
    Edit(EditArgs),
    /// Bezier cost, MSE and edit reports.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Render animation curves to an SVG image.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON corpus config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training sequences.
    #[arg(long)]
    pub sequences: Option<usize>,
    /// Held-out test sequences.
    #[arg(long)]
    pub test: Option<usize>,
    /// Frames per sequence.
    #[arg(long)]
    pub length: Option<usize>,
    /// Corpus seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus manifest written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoints and the loss trace.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON training config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// none, keyframes, noisy or visemes.
    #[arg(long)]
    pub constraint: Option<ConstraintKind>,
    /// Iteration budget.
    #[arg(long)]
    pub iters: Option<u64>,
    /// Sequences per batch.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Run seed (initialization, batches, masks, noise).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training window length in frames.
    #[arg(long)]
    pub seq_len: Option<usize>,
    /// Checkpoint cadence in iterations (0 disables intermediate saves).
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("filler").required(true).args(["model", "baseline"])))]
pub struct EditArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Fill with an interpolation baseline instead of a model (linear or cubic).
    #[arg(long)]
    pub baseline: Option<Interpolation>,
    /// Animation to edit.
    #[arg(long)]
    pub input: PathBuf,
    /// Edit spec: segments and optional guidance.
    #[arg(long)]
    pub spec: PathBuf,
    /// Latent noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Warp filled segments to pass through the keyframes exactly.
    #[arg(long)]
    pub exact_keyframes: bool,
    /// Edited animation.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write an edit report (JSON) for the filled segments.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Bezier tolerance used by `--report`.
    #[arg(long, default_value_t = facefill::eval::DEFAULT_TOLERANCE)]
    pub tol: f64,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Estimated Bezier control points per channel.
    Bezier(BezierArgs),
    /// Mean squared error between two animations.
    Mse(MseArgs),
    /// Per-segment edit report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct BezierArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = facefill::eval::DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// Restrict the fit to frames `start:end` (half-open).
    #[arg(long, value_parser = parse_segment)]
    pub range: Option<Segment>,
    /// Write the report as JSON here as well.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MseArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub original: PathBuf,
    #[arg(long)]
    pub edited: PathBuf,
    /// Edit spec whose segments are reported.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = facefill::eval::DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// Inference wall-clock time to include in the report.
    #[arg(long, default_value_t = 0.0)]
    pub inference_seconds: f64,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Animations to overlay; repeat the flag for several.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Curve labels, one per input (defaults to file stems).
    #[arg(long = "label")]
    pub labels: Vec<String>,
    /// Blendshape or rig distance channel names; repeat the flag for several.
    #[arg(long = "channel")]
    pub channels: Vec<String>,
    /// Plot all six rig distance curves.
    #[arg(long)]
    pub distances: bool,
    /// Shade the segments of this edit spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output SVG.
    #[arg(long)]
    pub out: PathBuf,
    /// Width of the image in pixels.
    #[arg(long, default_value_t = 1000)]
    pub width: u32,
    /// Height of each channel panel in pixels.
    #[arg(long, default_value_t = 360)]
    pub height: u32,
}

pub fn parse_segment(s: &str) -> Result<Segment, String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected start:end, got {s:?}"))?;
    let start: usize = a.trim().parse().map_err(|e| format!("bad start {a:?}: {e}"))?;
    let end: usize = b.trim().parse().map_err(|e| format!("bad end {b:?}: {e}"))?;
    if end <= start {
        return Err(format!("empty range {s:?}"));
    }
    Ok(Segment::new(start, end))
}
