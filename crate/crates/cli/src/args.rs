//! Command-line grammar.
//!
//! Every tunable is optional here so that values from `--config` can fill in
//! whatever was not given explicitly; see [`crate::config`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use semisparse::pipelines::StyleMode;
use semisparse::priors::Normalization;
use semisparse::{Grouping, StencilForm};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "semisparse",
    version,
    about = "Semi-sparsity smoothing and its applications",
    propagate_version = true
)]
pub struct Cli {
    /// Print progress; `smooth` shows the iteration table.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Flat JSON file of flag values. Explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smooth an image or signal.
    Smooth(SmoothArgs),
    /// Boost the detail layer.
    Enhance(EnhanceArgs),
    /// Split into detail layers at several scales and recombine with gains.
    Multiscale(MultiscaleArgs),
    /// Tone-map a radiance map.
    Hdr(HdrArgs),
    /// Pen or color-pencil rendering from the smoothed image.
    Stylize(StylizeArgs),
    /// Higher-order gradient sparsity of a set of images.
    Stats(StatsArgs),
    /// Generate a noisy synthetic signal or image.
    Synth(SynthArgs),
    /// Run the built-in oracle checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingArg {
    Pixel,
    Component,
}

impl From<GroupingArg> for Grouping {
    fn from(g: GroupingArg) -> Self {
        match g {
            GroupingArg::Pixel => Grouping::Pixel,
            GroupingArg::Component => Grouping::Component,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilArg {
    Pure,
    Full,
    Laplacian,
}

impl From<StencilArg> for StencilForm {
    fn from(s: StencilArg) -> Self {
        match s {
            StencilArg::Pure => StencilForm::Pure,
            StencilArg::Full => StencilForm::Full,
            StencilArg::Laplacian => StencilForm::Laplacian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Pen,
    ColorPencil,
}

impl From<ModeArg> for StyleMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Pen => StyleMode::Pen,
            ModeArg::ColorPencil => StyleMode::ColorPencil,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationArg {
    Raw,
    UnitGain,
}

impl From<NormalizationArg> for Normalization {
    fn from(n: NormalizationArg) -> Self {
        match n {
            NormalizationArg::Raw => Normalization::Raw,
            NormalizationArg::UnitGain => Normalization::UnitGain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetArg {
    /// Constant patches and a planar ramp (2D).
    RampSteps,
    /// Steps, ramps and spikes (1D).
    Mixed,
    /// A single noisy step (1D).
    Step,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// Weight of the L0 term.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Weight of the lower-order fidelity terms.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Growth of beta per iteration.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Decay of alpha per iteration.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Initial beta (default: lambda).
    #[arg(long)]
    pub beta0: Option<f64>,
    #[arg(long)]
    pub beta_max: Option<f64>,
    /// Order of the sparse gradient (1 to 3).
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long, value_enum)]
    pub grouping: Option<GroupingArg>,
    #[arg(long, value_enum)]
    pub stencil: Option<StencilArg>,
    /// Mirror padding in samples.
    #[arg(long)]
    pub pad: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct IoArgs {
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SmoothArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Clean reference; prints PSNR and MAE of the output against it.
    #[arg(long, value_name = "FILE")]
    pub reference: Option<PathBuf>,
    /// Border excluded from PSNR.
    #[arg(long)]
    pub crop: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Detail gain.
    #[arg(long)]
    pub boost: Option<f64>,
    /// Work on log10 intensities.
    #[arg(long, value_name = "BOOL", action = clap::ArgAction::Set)]
    pub log_domain: Option<bool>,
}

#[derive(Debug, Clone, Args)]
pub struct MultiscaleArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Level list as inline JSON or a path to a JSON file.
    #[arg(long, value_name = "JSON")]
    pub levels: Option<String>,
    /// Also write the base and detail layers (raw_f64) into this directory.
    #[arg(long, value_name = "DIR")]
    pub layers: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct HdrArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output base contrast in decades.
    #[arg(long)]
    pub target_range: Option<f64>,
    /// Color saturation exponent in (0, 1].
    #[arg(long)]
    pub saturation: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct StylizeArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub dog_sigma: Option<f64>,
    #[arg(long)]
    pub dog_k: Option<f64>,
    /// Edge threshold on the negated DoG response.
    #[arg(long)]
    pub edge_tau: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Use a soft tanh threshold with this sharpness instead of a hard one.
    #[arg(long, value_name = "PHI")]
    pub soft: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Magnitude at or below which a sample counts as zero.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Upper edge of the histogram range.
    #[arg(long)]
    pub range_max: Option<f64>,
    #[arg(long, value_enum)]
    pub normalization: Option<NormalizationArg>,
    #[arg(long)]
    pub max_order: Option<usize>,
    /// Ratio CSV destination (default: stdout).
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Histogram CSV destination.
    #[arg(long, value_name = "FILE")]
    pub histogram: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Noisy output; a provenance sidecar is written next to it as `<output>.json`.
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// JSON signal or image spec, used instead of a preset.
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    /// Clean output.
    #[arg(long, value_name = "FILE")]
    pub clean: Option<PathBuf>,
    /// Signal length (1D presets).
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    /// Noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random instances per shape in the dense-solve check.
    #[arg(long)]
    pub instances: Option<usize>,
}
