use std::fmt;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use huepair::baseline_choi::{choi_localize, ChoiConfig};
use huepair::colorops::{simulate_camera, ImageRaster};
use huepair::dataset::{
    make_test_set, read_manifest, synthetic_scene, write_test_set, ManifestRecord, SceneParams, TestSetParams,
};
use huepair::eval::{evaluate_run, prediction_mask_path};
use huepair::localize::{localize_pipeline, Heatmap, LocalizeParams, LocalizeRecord, MeanShiftParams};
use huepair::mask::Mask;
use huepair::model::{
    load_checkpoint, save_checkpoint, train_with_progress, BackboneConfig, CheckpointMeta, SiameseModel,
    TrainConfig, HIDDEN_UNITS,
};
use huepair::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{EvalArgs, LocalizeArgs, Method, RenderArgs, SourcesArgs, SynthArgs, TrainArgs};

/// Exit status classes: usage 1, incomplete inputs 2, runtime 3.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Incomplete(String),
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Incomplete(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Incomplete(m) => write!(f, "incomplete inputs: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match &e {
            Error::Parameter(_) | Error::Dimension(_) => Failure::Usage(e.to_string()),
            Error::Io { source, .. } if source.kind() == ErrorKind::NotFound => Failure::Incomplete(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::from(Error::Io { path: path.to_path_buf(), source: e })
}

fn create_dir(path: &Path) -> Outcome {
    fs::create_dir_all(path).map_err(|e| io_failure(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| io_failure(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Outcome {
    let mut text = String::new();
    for r in rows {
        text += &serde_json::to_string(r).map_err(|e| Failure::Runtime(e.to_string()))?;
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

/// Resolved settings written beside every run's outputs.
#[derive(Serialize)]
pub struct RunConfig<'a, A: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub out: &'a Path,
    pub args: &'a A,
}

pub fn persist_config<A: Serialize>(out: &Path, command: &str, seed: u64, args: &A) -> Outcome {
    create_dir(out)?;
    let cfg = RunConfig { command, version: env!("CARGO_PKG_VERSION"), seed, out, args };
    write_json(&out.join("config.json"), &cfg)
}

/// Image files (png, jpg, jpeg) in `dir`, sorted by name.
fn image_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| io_failure(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|x| x.to_str())
                .is_some_and(|x| matches!(x.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Incomplete(format!("no png or jpg images in {}", dir.display())));
    }
    Ok(files)
}

fn load_images(dir: &Path) -> Result<Vec<ImageRaster>, Failure> {
    let files = image_files(dir)?;
    Ok(files.par_iter().map(|p| ImageRaster::load(p)).collect::<huepair::Result<Vec<_>>>()?)
}

pub fn sources(args: &SourcesArgs, seed: u64, out: &Path) -> Outcome {
    let (height, width) = args.size;
    if args.count == 0 || height == 0 || width == 0 {
        return Err(Failure::Usage("count and size must be positive".into()));
    }
    persist_config(out, "sources", seed, args)?;
    let params = SceneParams { height, width, ..Default::default() };
    (0..args.count).into_par_iter().try_for_each(|i| -> Outcome {
        let img = synthetic_scene(&params, seed, i as u64)?;
        img.save_png(&out.join(format!("source-{i:04}.png")))?;
        Ok(())
    })?;
    eprintln!("wrote {} source images to {}", args.count, out.display());
    Ok(())
}

pub fn synth(args: &SynthArgs, seed: u64, out: &Path) -> Outcome {
    let params = TestSetParams {
        angles: args.angles.0.clone(),
        qf: args.qf,
        per_angle: args.per_angle,
        pristine: args.pristine,
        crop_height: args.crop.0,
        crop_width: args.crop.1,
        box_size: args.box_size,
        cfa: args.cfa,
    };
    let pool = load_images(&args.sources)?;
    let cases = make_test_set(args.recipe, &pool, &params, seed)?;
    persist_config(out, "synth", seed, args)?;
    let records = write_test_set(&cases, out)?;
    eprintln!("wrote {} {} cases to {}", records.len(), args.recipe, out.display());
    Ok(())
}

/// Crops to even sides and passes through the camera simulation.
fn camera_pool(pool: Vec<ImageRaster>, args: &TrainArgs) -> Result<Vec<ImageRaster>, Failure> {
    if args.no_camera_sim {
        return Ok(pool);
    }
    Ok(pool
        .par_iter()
        .map(|img| {
            let (h, w) = (img.height() & !1, img.width() & !1);
            simulate_camera(&img.crop(0, 0, h, w)?, args.cfa)
        })
        .collect::<huepair::Result<Vec<_>>>()?)
}

pub fn train(args: &TrainArgs, seed: u64, out: &Path) -> Outcome {
    let config = TrainConfig {
        backbone: BackboneConfig::for_kind(args.backbone),
        mode: args.mode,
        batch_size: args.batch_size,
        lr0: args.lr,
        epochs: args.epochs,
        patience: (args.patience > 0).then_some(args.patience),
        pairs: args.pairs,
        seed,
        ..Default::default()
    };
    let pool = camera_pool(load_images(&args.pool)?, args)?;
    persist_config(out, "train", seed, args)?;
    write_json(&out.join("train_config.json"), &config)?;
    let outcome = train_with_progress(&config, &pool, |r| {
        eprintln!(
            "epoch {:>3}  lr {:.2e}  train {:.5}  val {:.5}  acc {:.4}",
            r.epoch, r.lr, r.train_loss, r.val_loss, r.val_accuracy
        )
    })?;
    write_jsonl(&out.join("loss.jsonl"), &outcome.log)?;
    write_json(&out.join("summary.json"), &outcome.summary)?;
    let meta = CheckpointMeta {
        backbone: config.backbone.clone(),
        head_hidden: HIDDEN_UNITS,
        seed,
        train: Some(config),
        summary: Some(outcome.summary.clone()),
    };
    save_checkpoint(&outcome.model, &meta, &out.join("model.ckpt"))?;
    eprintln!(
        "best epoch {} of {}: val loss {:.5}, acc {:.4}",
        outcome.summary.best_epoch, outcome.summary.epochs_run, outcome.summary.val_loss, outcome.summary.val_accuracy
    );
    Ok(())
}

/// One line of a localize run's `records.jsonl`.
#[derive(Serialize)]
struct PredictionRecord {
    id: String,
    method: &'static str,
    forged_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    siamese: Option<LocalizeRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    windows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    forged_windows: Option<usize>,
}

struct Job {
    id: String,
    image: PathBuf,
}

fn localize_jobs(args: &LocalizeArgs) -> Result<Vec<Job>, Failure> {
    if let Some(m) = &args.manifest {
        let root = m.parent().unwrap_or(Path::new("."));
        return Ok(read_manifest(m)?.into_iter().map(|r| Job { image: root.join(&r.image), id: r.id }).collect());
    }
    let image = args.image.clone().ok_or_else(|| Failure::Usage("give --manifest or --image".into()))?;
    let id = image
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Failure::Usage(format!("cannot name output for {}", image.display())))?
        .to_string();
    Ok(vec![Job { id, image }])
}

pub fn localize(args: &LocalizeArgs, seed: u64, out: &Path) -> Outcome {
    let jobs = localize_jobs(args)?;
    let model = match (args.method, &args.model) {
        (Method::Siamese, Some(p)) => Some(load_checkpoint(p, None)?.0),
        (Method::Siamese, None) => return Err(Failure::Usage("--method siamese needs --model".into())),
        (Method::Choi, _) => None,
    };
    let params = LocalizeParams {
        stride: args.stride,
        threshold: args.threshold,
        mean_shift: MeanShiftParams { bandwidth: args.bandwidth, ..Default::default() },
        invert: args.invert,
    };
    let choi = ChoiConfig { cfa: args.cfa, ..Default::default() };
    persist_config(out, "localize", seed, args)?;
    create_dir(&out.join("masks"))?;
    if model.is_some() {
        create_dir(&out.join("heatmaps"))?;
    }
    let records = jobs
        .par_iter()
        .map(|job| -> Result<PredictionRecord, Failure> {
            let img = ImageRaster::load(&job.image)?;
            let mask_path = prediction_mask_path(out, &job.id);
            match &model {
                Some(model) => {
                    // A private copy keeps the backbone-call count per image.
                    let model: SiameseModel = model.clone();
                    let loc = localize_pipeline(&img, &model, &params)?;
                    loc.mask.mask.save_png(&mask_path)?;
                    loc.heatmap.save_png(&out.join("heatmaps").join(format!("{}.png", job.id)))?;
                    loc.heatmap.save_raw(&out.join("heatmaps").join(format!("{}.f32", job.id)))?;
                    Ok(PredictionRecord {
                        id: job.id.clone(),
                        method: Method::Siamese.name(),
                        forged_fraction: loc.record.forged_fraction,
                        siamese: Some(loc.record),
                        windows: None,
                        forged_windows: None,
                    })
                }
                None => {
                    let res = choi_localize(&img, &choi)?;
                    res.mask.save_png(&mask_path)?;
                    Ok(PredictionRecord {
                        id: job.id.clone(),
                        method: Method::Choi.name(),
                        forged_fraction: res.mask.fraction(),
                        siamese: None,
                        windows: Some(res.windows.len()),
                        forged_windows: Some(res.windows.iter().filter(|w| w.forged).count()),
                    })
                }
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_jsonl(&out.join("records.jsonl"), &records)?;
    eprintln!("localized {} image(s) with {} into {}", records.len(), args.method.name(), out.display());
    Ok(())
}

pub fn eval(args: &EvalArgs, seed: u64, out: &Path) -> Outcome {
    let report = evaluate_run(&args.manifest, &args.predictions, args.group_by)?;
    persist_config(out, "eval", seed, args)?;
    report.write(out)?;
    print!("{}", report.table());
    if report.is_complete() {
        Ok(())
    } else {
        Err(Failure::Incomplete(format!("{} case(s) have no prediction", report.missing.len())))
    }
}

const GAP: usize = 8;

/// Image, heatmap (when present), prediction and ground truth left to right.
fn panel(img: &ImageRaster, heatmap: Option<&Heatmap>, pred: &Mask, gt: &Mask) -> huepair::Result<ImageRaster> {
    let (h, w) = (img.height(), img.width());
    let tiles = 3 + usize::from(heatmap.is_some());
    let mut out = ImageRaster::filled(h, tiles * w + (tiles - 1) * GAP, [255, 255, 255])?;
    let gray = |v: u8| [v, v, v];
    let mask_px = |m: &Mask, y, x| gray(if m.get(y, x) { 255 } else { 0 });
    for y in 0..h {
        for x in 0..w {
            let mut col = 0;
            let mut put = |rgb: [u8; 3]| {
                out.set(y, col * (w + GAP) + x, rgb);
                col += 1;
            };
            put(img.get(y, x));
            if let Some(hm) = heatmap {
                put(gray((hm.get(y, x) * 255.0).round() as u8));
            }
            put(mask_px(pred, y, x));
            put(mask_px(gt, y, x));
        }
    }
    Ok(out)
}

pub fn render(args: &RenderArgs, seed: u64, out: &Path) -> Outcome {
    let records = read_manifest(&args.manifest)?;
    let root = args.manifest.parent().unwrap_or(Path::new("."));
    let chosen: Vec<&ManifestRecord> = if args.ids.is_empty() {
        records.iter().collect()
    } else {
        let picked: Vec<_> = records.iter().filter(|r| args.ids.contains(&r.id)).collect();
        if picked.len() != args.ids.len() {
            return Err(Failure::Usage("some --ids are not in the manifest".into()));
        }
        picked
    };
    persist_config(out, "render", seed, args)?;
    let missing: Vec<String> = chosen
        .par_iter()
        .map(|r| -> Result<Option<String>, Failure> {
            let pred_path = prediction_mask_path(&args.predictions, &r.id);
            if !pred_path.exists() {
                return Ok(Some(r.id.clone()));
            }
            let raw = args.predictions.join("heatmaps").join(format!("{}.f32", r.id));
            let heatmap = if raw.exists() { Some(Heatmap::load_raw(&raw)?) } else { None };
            let img = ImageRaster::load(&root.join(&r.image))?;
            let p = panel(&img, heatmap.as_ref(), &Mask::load_png(&pred_path)?, &Mask::load_png(&root.join(&r.mask))?)?;
            p.save_png(&out.join(format!("{}.png", r.id)))?;
            Ok(None)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    eprintln!("rendered {} panel(s) into {}", chosen.len() - missing.len(), out.display());
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Failure::Incomplete(format!("no prediction for {}", missing.join(", "))))
    }
}
