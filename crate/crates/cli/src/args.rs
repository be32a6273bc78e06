use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use huepair::colorops::{CfaPattern, HueAngle};
use huepair::dataset::{PairMode, Recipe};
use huepair::eval::Grouping;
use huepair::localize::ThresholdMode;
use huepair::model::BackboneKind;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "huepair", version, about = "Hue-modification forgery synthesis, detection and scoring")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct Global {
    /// Master seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// Output directory; defaults to `<HUEPAIR_OUT or runs>/<command>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a pool of synthetic source images.
    Sources(SourcesArgs),
    /// Build a forgery test set and its manifest from source images.
    Synth(SynthArgs),
    /// Train the Siamese patch model.
    Train(TrainArgs),
    /// Produce heatmaps and masks for a manifest or a single image.
    Localize(LocalizeArgs),
    /// Score predicted masks against ground truth.
    Eval(EvalArgs),
    /// Side-by-side panels of image, heatmap, prediction and ground truth.
    Render(RenderArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SourcesArgs {
    #[arg(long, default_value_t = 30)]
    pub count: usize,
    /// Image size as HEIGHTxWIDTH.
    #[arg(long, default_value = "768x1024", value_parser = parse_size)]
    pub size: (usize, usize),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Directory of source images (png or jpg), used in file-name order.
    #[arg(long)]
    pub sources: PathBuf,
    #[arg(long, value_parser = parse_recipe)]
    pub recipe: Recipe,
    /// `start:stop:step` or a comma list, in degrees.
    #[arg(long, default_value = "30:330:30", value_parser = parse_angles)]
    pub angles: AngleList,
    /// First compression quality; required by b-jpg and a-jpg.
    #[arg(long)]
    pub qf: Option<u8>,
    #[arg(long, default_value_t = 10)]
    pub per_angle: usize,
    #[arg(long, default_value_t = 10)]
    pub pristine: usize,
    #[arg(long, default_value = "768x1024", value_parser = parse_size)]
    pub crop: (usize, usize),
    /// Side of the square box the convex forgery region is drawn in.
    #[arg(long, default_value_t = huepair::dataset::DEFAULT_BOX)]
    pub box_size: usize,
    #[arg(long, default_value = "GBRG", value_parser = parse_cfa)]
    pub cfa: CfaPattern,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Directory of training source images.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value = "clean", value_parser = parse_mode)]
    pub mode: PairMode,
    #[arg(long, default_value = "small-cnn", value_parser = parse_backbone)]
    pub backbone: BackboneKind,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20_000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    /// Use pool images as they are instead of passing them through mosaic and demosaic.
    #[arg(long)]
    pub no_camera_sim: bool,
    #[arg(long, default_value = "GBRG", value_parser = parse_cfa)]
    pub cfa: CfaPattern,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Siamese,
    Choi,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Siamese => "siamese",
            Method::Choi => "choi",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct LocalizeArgs {
    #[arg(long, value_enum, default_value = "siamese")]
    pub method: Method,
    /// Checkpoint; required by the siamese method.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, conflicts_with = "image", required_unless_present = "image")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// `adaptive`, `adaptive:<tail>:<floor>` or `fixed:<tau>`.
    #[arg(long, default_value = "adaptive", value_parser = parse_threshold)]
    pub threshold: ThresholdMode,
    #[arg(long, default_value_t = huepair::localize::DEFAULT_STRIDE)]
    pub stride: usize,
    /// Fixed mean-shift bandwidth instead of the data-driven default.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Flip the heatmap, for images where most patches are modified.
    #[arg(long)]
    pub invert: bool,
    #[arg(long, default_value = "GBRG", value_parser = parse_cfa)]
    pub cfa: CfaPattern,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory of a localize run.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value = "angle", value_parser = parse_grouping)]
    pub group_by: Grouping,
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Case ids to render; all cases when omitted.
    #[arg(long, value_delimiter = ',')]
    pub ids: Vec<String>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once('x').ok_or_else(|| format!("expected HEIGHTxWIDTH, got {s:?}"))?;
    let n = |v: &str| v.parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((n(h)?, n(w)?))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct AngleList(pub Vec<HueAngle>);

pub fn parse_angles(s: &str) -> Result<AngleList, String> {
    let n = |v: &str| v.trim().parse::<i64>().map_err(|e| format!("{v:?}: {e}"));
    let parts: Vec<&str> = s.split(':').collect();
    let degrees: Vec<i64> = match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, st) = (n(start)?, n(stop)?, n(step)?);
            if st <= 0 || b < a {
                return Err(format!("bad angle range {s:?}"));
            }
            (a..=b).step_by(st as usize).collect()
        }
        [list] => list.split(',').map(n).collect::<Result<_, _>>()?,
        _ => return Err(format!("bad angle list {s:?}")),
    };
    Ok(AngleList(degrees.into_iter().map(HueAngle::new).collect()))
}

fn parse_recipe(s: &str) -> Result<Recipe, String> {
    s.parse().map_err(|e: huepair::Error| e.to_string())
}

fn parse_cfa(s: &str) -> Result<CfaPattern, String> {
    s.parse().map_err(|e: huepair::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<PairMode, String> {
    s.parse().map_err(|e: huepair::Error| e.to_string())
}

fn parse_backbone(s: &str) -> Result<BackboneKind, String> {
    s.parse().map_err(|e: huepair::Error| e.to_string())
}

fn parse_threshold(s: &str) -> Result<ThresholdMode, String> {
    s.parse().map_err(|e: huepair::Error| e.to_string())
}

fn parse_grouping(s: &str) -> Result<Grouping, String> {
    s.parse().map_err(|e: huepair::Error| e.to_string())
}
