//! Mini-batch training of the Siamese model on synthesized pairs.
//!
//! Pair `i` is regenerated from its own random stream every time it is
//! needed, so the pair set is fixed by `(seed, pairs)` without being held in
//! memory. Labels alternate with the index and roughly 10% of indices are held
//! out for validation by hashing, which keeps both classes present in both
//! splits.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::backbone::{pack_patches, BackboneConfig};
use super::loss::{pair_bce, pair_bce_grad_logit};
use super::siamese::{logistic, SiameseModel};
use crate::colorops::{HueAngle, ImageRaster};
use crate::dataset::{training_angles, PairMode, PairSampler, TrainingPair};
use crate::error::{Error, Result};
use crate::rng::{domain, stream_seed, tagged_rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub backbone: BackboneConfig,
    pub mode: PairMode,
    /// Pairs per step; half carry label 1.
    pub batch_size: usize,
    pub lr0: f64,
    /// The rate stays at `lr0` through this epoch, then halves every `lr_halve_every` epochs.
    pub lr_hold_epochs: usize,
    pub lr_halve_every: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a lower validation loss.
    pub patience: Option<usize>,
    /// Size of the generated pair set, validation included.
    pub pairs: usize,
    pub val_fraction: f64,
    pub angles: Vec<HueAngle>,
    pub same_image: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::small_cnn(),
            mode: PairMode::Clean,
            batch_size: 64,
            lr0: 1e-4,
            lr_hold_epochs: 30,
            lr_halve_every: 5,
            epochs: 50,
            patience: Some(10),
            pairs: 20_000,
            val_fraction: 0.1,
            angles: training_angles(),
            same_image: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rate used during 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = epoch.saturating_sub(self.lr_hold_epochs) / self.lr_halve_every.max(1);
        self.lr0 * 0.5f64.powi(halvings as i32)
    }

    pub fn sampler(&self) -> PairSampler {
        PairSampler {
            mode: self.mode,
            patch_size: self.backbone.patch_size,
            same_image: self.same_image,
            angles: self.angles.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return Err(Error::Parameter("batch size must be even and at least 2".into()));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Parameter("initial learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Parameter("validation fraction must be in [0, 1)".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Parameter("at least one epoch is required".into()));
        }
        Ok(())
    }

    /// Whether pair `i` belongs to the validation split.
    pub fn is_validation(&self, i: usize) -> bool {
        let h = stream_seed(stream_seed(self.seed, domain::SPLIT), i as u64);
        (h >> 11) as f64 / (1u64 << 53) as f64 >= 1.0 - self.val_fraction
    }

    pub fn pair_label(i: usize) -> u8 {
        (i % 2) as u8
    }

    /// Regenerates pair `i` of the configured set.
    pub fn pair(&self, sampler: &PairSampler, pool: &[ImageRaster], i: usize) -> Result<TrainingPair> {
        let mut rng = tagged_rng(self.seed, domain::PAIR, i as u64);
        sampler.sample_with_label(pool, Self::pair_label(i), &mut rng)
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub train_pairs: usize,
    pub val_pairs: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: SiameseModel,
    pub log: Vec<EpochRecord>,
    pub summary: TrainSummary,
}

struct PairEval {
    loss: f64,
    correct: usize,
}

/// Pairs per forward/backward chunk; bounds the im2col buffers so they are
/// reused by the allocator instead of being mapped afresh on every step.
const MICRO_BATCH: usize = 16;

/// Forward pass over `pairs`; with `grads`, also accumulates the gradient of
/// the mean loss over all of `pairs`.
fn run_pairs(
    model: &mut SiameseModel,
    pairs: &[TrainingPair],
    mut grads: Option<(&mut [f32], &mut [f64])>,
) -> Result<PairEval> {
    let total = pairs.len();
    let mut eval = PairEval { loss: 0.0, correct: 0 };
    for chunk in pairs.chunks(MICRO_BATCH) {
        let g = grads.as_mut().map(|(b, h)| (&mut **b, &mut **h));
        let e = run_chunk(model, chunk, total, g)?;
        eval.loss += e.loss;
        eval.correct += e.correct;
    }
    eval.loss /= total as f64;
    Ok(eval)
}

/// Returns the summed loss over `pairs`; gradients are scaled by `1 / total`.
fn run_chunk(
    model: &mut SiameseModel,
    pairs: &[TrainingPair],
    total: usize,
    grads: Option<(&mut [f32], &mut [f64])>,
) -> Result<PairEval> {
    let n = pairs.len();
    let (backbone, params, head) = model.parts_mut();
    let patches: Vec<&ImageRaster> = pairs.iter().map(|p| &p.patch_a).chain(pairs.iter().map(|p| &p.patch_b)).collect();
    let x = pack_patches(&patches, backbone.config().patch_size, backbone.config().input_filter)?;
    let mut cache = grads.is_some().then(Vec::new);
    let feats = backbone.forward(params, x, 2 * n, cache.as_mut());
    let dim = backbone.feature_dim();
    let cols = 2 * n;

    let mut loss = 0.0;
    let mut correct = 0;
    let mut dfeats = vec![0f32; if grads.is_some() { dim * cols } else { 0 }];
    let mut head_grads = grads.as_ref().map(|_| vec![0f64; head.params().len()]);
    for (k, pair) in pairs.iter().enumerate() {
        let u: Vec<f64> = (0..dim).map(|f| feats[f * cols + k] as f64).collect();
        let v: Vec<f64> = (0..dim).map(|f| feats[f * cols + n + k] as f64).collect();
        let d: Vec<f64> = u.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).collect();
        let trace = head.trace(&d);
        let p = logistic(trace.z);
        loss += pair_bce(p, pair.label);
        correct += usize::from((p > 0.5) == (pair.label == 1));
        if let Some(hg) = head_grads.as_mut() {
            let dz = pair_bce_grad_logit(p, pair.label) / total as f64;
            if dz == 0.0 {
                continue;
            }
            let dd = head.backward(&d, &trace, dz, hg);
            for f in 0..dim {
                let du = dd[f] * 2.0 * (u[f] - v[f]);
                dfeats[f * cols + k] = du as f32;
                dfeats[f * cols + n + k] = -du as f32;
            }
        }
    }
    if let (Some((bg, hg_out)), Some(hg), Some(cache)) = (grads, head_grads, cache) {
        backbone.backward(params, &cache, dfeats, cols, bg);
        for (o, g) in hg_out.iter_mut().zip(hg) {
            *o += g;
        }
    }
    Ok(PairEval { loss, correct })
}

fn generate(config: &TrainConfig, sampler: &PairSampler, pool: &[ImageRaster], idx: &[usize]) -> Result<Vec<TrainingPair>> {
    idx.par_iter().map(|&i| config.pair(sampler, pool, i)).collect()
}

/// Mean loss and accuracy of `model` over the given pair indices.
pub fn evaluate_pairs(
    model: &SiameseModel,
    config: &TrainConfig,
    pool: &[ImageRaster],
    indices: &[usize],
) -> Result<(f64, f64)> {
    let sampler = config.sampler();
    let mut m = model.clone();
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in indices.chunks(128) {
        let pairs = generate(config, &sampler, pool, chunk)?;
        let e = run_pairs(&mut m, &pairs, None)?;
        loss += e.loss * chunk.len() as f64;
        correct += e.correct;
    }
    let n = indices.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Indices of the validation split of `config`'s pair set.
pub fn validation_indices(config: &TrainConfig) -> Vec<usize> {
    (0..config.pairs).filter(|&i| config.is_validation(i)).collect()
}

pub fn train(config: &TrainConfig, pool: &[ImageRaster]) -> Result<TrainOutcome> {
    train_with_progress(config, pool, |_| {})
}

/// Trains from a fresh initialization, calling `progress` after each epoch.
pub fn train_with_progress(
    config: &TrainConfig,
    pool: &[ImageRaster],
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::Parameter("training pool is empty".into()));
    }
    let sampler = config.sampler();
    let mut model = SiameseModel::new(config.backbone.clone(), config.seed)?;
    let val_idx = validation_indices(config);
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..config.pairs).filter(|&i| !config.is_validation(i)).partition(|&i| TrainConfig::pair_label(i) == 1);
    let half = config.batch_size / 2;
    let steps = pos.len().min(neg.len()) / half;
    if steps == 0 || val_idx.is_empty() {
        return Err(Error::Parameter(format!(
            "{} pairs are too few for one balanced batch of {} plus validation",
            config.pairs, config.batch_size
        )));
    }

    let n_backbone = model.backbone().n_params();
    let n_head = model.head().params().len();
    let mut opt_backbone = Adam::new(n_backbone);
    let mut opt_head = Adam::new(n_head);
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, SiameseModel)> = None;

    for epoch in 1..=config.epochs {
        let lr = config.lr_at(epoch);
        let mut rng = tagged_rng(config.seed, domain::SHUFFLE, epoch as u64);
        let (mut p, mut q) = (pos.clone(), neg.clone());
        p.shuffle(&mut rng);
        q.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for step in 0..steps {
            let mut idx: Vec<usize> = p[step * half..(step + 1) * half].to_vec();
            idx.extend_from_slice(&q[step * half..(step + 1) * half]);
            let pairs = generate(config, &sampler, pool, &idx)?;
            let mut gb = vec![0f32; n_backbone];
            let mut gh = vec![0f64; n_head];
            let e = run_pairs(&mut model, &pairs, Some((&mut gb, &mut gh)))?;
            if !e.loss.is_finite() || gb.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, step, loss: e.loss });
            }
            train_loss += e.loss;
            let (_, params, head) = model.parts_mut();
            opt_backbone.step(params.as_mut_slice(), &gb, lr);
            opt_head.step(head.params_mut(), &gh, lr);
        }
        let (val_loss, val_accuracy) = evaluate_pairs(&model, config, pool, &val_idx)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, step: steps, loss: val_loss });
        }
        let record = EpochRecord { epoch, lr, train_loss: train_loss / steps as f64, val_loss, val_accuracy };
        progress(&record);
        log.push(record);
        if best.as_ref().is_none_or(|(l, _, _)| val_loss < *l) {
            best = Some((val_loss, epoch, model.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if config.patience.is_some_and(|pat| epoch - best_epoch >= pat) {
            break;
        }
    }

    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    let rec = &log[best_epoch - 1];
    let summary = TrainSummary {
        epochs_run: log.len(),
        best_epoch,
        train_loss: rec.train_loss,
        val_loss: rec.val_loss,
        val_accuracy: rec.val_accuracy,
        train_pairs: config.pairs - val_idx.len(),
        val_pairs: val_idx.len(),
    };
    Ok(TrainOutcome { model, log, summary })
}
