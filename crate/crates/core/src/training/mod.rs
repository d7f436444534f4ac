//! Fine-tuning with softmax cross-entropy over answer choices.
//!
//! Each step scores every choice of every instance in the batch, pads the
//! batch to its widest choice count with masked slots, averages the
//! cross-entropy over instances and applies one AdamW update to the
//! trainable parameter set.

mod loss;
mod optim;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use loss::{choice_cross_entropy, cross_entropy_grad};
pub use optim::{AdamW, AdamWConfig};

use crate::backends::{BackendError, BackendKind, TrainableBackend};
use crate::scoring::{
    check_mode, choice_texts, guidance_text, score_dataset, score_instance, ScoringError, ScoringMode,
};
use crate::types::{ChoiceScores, CoreError, GuidanceBundle, GuidanceKind, MultiChoiceInstance};

/// Learning rates swept for pretrained backends.
pub const LEARNING_RATE_GRID: [f64; 3] = [1e-6, 3e-6, 5e-6];
pub const DEFAULT_LEARNING_RATE: f64 = 3e-6;
/// Toy backends train from scratch and need a much larger step.
pub const TOY_LEARNING_RATE: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("instance {0:?} has no guidance for a guided mode")]
    MissingGuidance(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingGuidancePolicy {
    #[default]
    Error,
    /// Drop instances without guidance, with a warning.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: AdamWConfig,
    pub mode: ScoringMode,
    pub guidance_kinds: Vec<GuidanceKind>,
    pub seed: u64,
    /// Extra parameter names or groups (prefix before the first `.`) to freeze.
    pub freeze: Vec<String>,
    pub missing_guidance: MissingGuidancePolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            epochs: 8,
            learning_rate: DEFAULT_LEARNING_RATE,
            optimizer: AdamWConfig::default(),
            mode: ScoringMode::Unguided,
            guidance_kinds: Vec::new(),
            seed: 0,
            freeze: Vec::new(),
            missing_guidance: MissingGuidancePolicy::Error,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.mode.is_guided() && self.guidance_kinds.is_empty() {
            return Err(TrainError::Config("guided modes need at least one guidance kind".into()));
        }
        Ok(())
    }
}

/// Parameters updated by the optimizer for `mode`.
///
/// Fusion backends keep the image encoder frozen and train only the head the
/// mode scores with. Dual encoders train everything. `overrides` freezes
/// further names or groups.
pub fn freeze_policy(backend: &dyn TrainableBackend, mode: ScoringMode, overrides: &[String]) -> BTreeSet<String> {
    let image = backend.image_encoder_params();
    let group = |name: &str| name.split('.').next().unwrap_or(name).to_string();
    backend
        .params()
        .names()
        .filter(|name| {
            if backend.kind() == BackendKind::Fusion {
                if image.iter().any(|i| i == name) {
                    return false;
                }
                let g = group(name);
                if mode == ScoringMode::GuidedMerge && g == "proj" {
                    return false;
                }
                if mode != ScoringMode::GuidedMerge && g == "proj_guided" {
                    return false;
                }
            }
            !overrides.iter().any(|o| o == name || *o == group(name))
        })
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub step: u64,
    pub mean_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

/// Resumable loop position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub epoch: usize,
    pub running_loss: f64,
    pub seed: u64,
    pub param_hash: String,
}

/// Instances paired with their combined guidance.
pub struct PreparedData<'a> {
    pub instances: Vec<&'a MultiChoiceInstance>,
    pub guidance: Vec<Option<String>>,
    pub skipped: Vec<String>,
}

/// Resolves guidance for every instance according to `config`.
pub fn prepare<'a>(
    dataset: &'a [MultiChoiceInstance],
    bundles: &BTreeMap<String, GuidanceBundle>,
    config: &TrainConfig,
) -> Result<PreparedData<'a>, TrainError> {
    let mut out = PreparedData {
        instances: Vec::with_capacity(dataset.len()),
        guidance: Vec::with_capacity(dataset.len()),
        skipped: Vec::new(),
    };
    for inst in dataset {
        let g = if config.mode.is_guided() {
            match guidance_text(bundles.get(&inst.id), &config.guidance_kinds) {
                Some(g) => Some(g),
                None if config.missing_guidance == MissingGuidancePolicy::Skip => {
                    out.skipped.push(inst.id.clone());
                    continue;
                }
                None => return Err(TrainError::MissingGuidance(inst.id.clone())),
            }
        } else {
            None
        };
        out.instances.push(inst);
        out.guidance.push(g);
    }
    if !out.skipped.is_empty() {
        log::warn!("skipped {} instances without guidance", out.skipped.len());
    }
    Ok(out)
}

fn accuracy_of(
    backend: &dyn TrainableBackend,
    data: &PreparedData<'_>,
    mode: ScoringMode,
) -> Result<f64, TrainError> {
    let instances: Vec<MultiChoiceInstance> = data.instances.iter().map(|i| (*i).clone()).collect();
    let preds = score_dataset(backend.scorer(), &instances, &data.guidance, mode)?;
    let correct = preds.iter().filter(|p| p.is_correct()).count();
    Ok(100.0 * correct as f64 / preds.len() as f64)
}

/// Optimizer plus loop state; can be snapshotted between epochs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trainer {
    pub config: TrainConfig,
    pub optimizer: AdamW,
    pub state: TrainState,
    trainable: BTreeSet<String>,
}

impl Trainer {
    pub fn new(backend: &dyn TrainableBackend, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let has_head = match backend.scorer() {
            crate::backends::BackendRef::Fusion(f) => f.has_guided_head(),
            crate::backends::BackendRef::Dual(_) => false,
        };
        check_mode(backend.kind(), has_head, config.mode)?;
        let trainable = freeze_policy(backend, config.mode, &config.freeze);
        let optimizer = AdamW::new(config.optimizer, config.learning_rate, backend.params());
        let state = TrainState {
            step: 0,
            epoch: 0,
            running_loss: 0.0,
            seed: config.seed,
            param_hash: backend.params().content_hash(),
        };
        Ok(Self {
            config,
            optimizer,
            state,
            trainable,
        })
    }

    pub fn trainable(&self) -> &BTreeSet<String> {
        &self.trainable
    }

    /// Visiting order for `epoch`; a permutation keyed by `(seed, epoch)`.
    pub fn epoch_order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let key = self.config.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(key));
        order
    }

    /// One optimizer step over `batch` (indices into `data`). Returns the
    /// per-instance losses.
    pub fn step(
        &mut self,
        backend: &mut dyn TrainableBackend,
        data: &PreparedData<'_>,
        batch: &[usize],
    ) -> Result<Vec<f64>, TrainError> {
        let mode = self.config.mode;
        let mut scored: Vec<ChoiceScores> = Vec::with_capacity(batch.len());
        for &i in batch {
            scored.push(score_instance(
                backend.scorer(),
                data.instances[i],
                data.guidance[i].as_deref(),
                mode,
            )?);
        }
        let width = scored.iter().map(ChoiceScores::len).max().unwrap_or(0);
        let mut grads = backend.params().zeros_like();
        let mut losses = Vec::with_capacity(batch.len());
        let scale = 1.0 / batch.len() as f64;
        for (&i, scores) in batch.iter().zip(&scored) {
            let inst = data.instances[i];
            let padded = scores.padded(width);
            losses.push(choice_cross_entropy(&padded, inst.gold_index)?.value);
            let d_raw = cross_entropy_grad(&padded, inst.gold_index)?;
            let texts = choice_texts(inst, data.guidance[i].as_deref(), mode)?;
            for (c, text) in texts.iter().enumerate() {
                backend.match_with_grad(&inst.image_ref, text.route(mode), d_raw[c] * scale, &mut grads)?;
            }
        }
        self.optimizer.step(backend.params_mut(), &grads, &self.trainable);
        self.state.step += 1;
        Ok(losses)
    }

    /// One pass over `data` followed by train (and optional validation)
    /// accuracy.
    pub fn run_epoch(
        &mut self,
        backend: &mut dyn TrainableBackend,
        data: &PreparedData<'_>,
        validation: Option<&PreparedData<'_>>,
    ) -> Result<EpochMetrics, TrainError> {
        let epoch = self.state.epoch + 1;
        let order = self.epoch_order(epoch, data.instances.len());
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            total += self.step(backend, data, batch)?.iter().sum::<f64>();
        }
        let mean_loss = total / data.instances.len() as f64;
        if !mean_loss.is_finite() {
            return Err(TrainError::Config(format!("loss diverged at epoch {epoch}")));
        }
        self.state.epoch = epoch;
        self.state.running_loss = mean_loss;
        self.state.param_hash = backend.params().content_hash();
        let train_acc = accuracy_of(backend, data, self.config.mode)?;
        let val_acc = match validation {
            Some(v) => Some(accuracy_of(backend, v, self.config.mode)?),
            None => None,
        };
        Ok(EpochMetrics {
            epoch,
            step: self.state.step,
            mean_loss,
            train_acc,
            val_acc,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept (best validation accuracy, else last).
    pub selected_epoch: usize,
    pub trainer: Trainer,
    pub skipped: Vec<String>,
}

/// Trains `backend` in place for `config.epochs` epochs.
///
/// With a validation set the parameters of the epoch with the best
/// validation accuracy (earliest on ties) are restored at the end.
pub fn train(
    backend: &mut dyn TrainableBackend,
    dataset: &[MultiChoiceInstance],
    bundles: &BTreeMap<String, GuidanceBundle>,
    config: &TrainConfig,
    validation: Option<&[MultiChoiceInstance]>,
) -> Result<TrainOutcome, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut trainer = Trainer::new(backend, config.clone())?;
    let data = prepare(dataset, bundles, config)?;
    if data.instances.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let val = match validation {
        Some(v) if !v.is_empty() => Some(prepare(v, bundles, config)?),
        _ => None,
    };
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, crate::backends::ParamStore)> = None;
    for _ in 0..config.epochs {
        let m = trainer.run_epoch(backend, &data, val.as_ref())?;
        log::info!(
            "epoch {} step {} loss {:.6} train_acc {:.2}{}",
            m.epoch,
            m.step,
            m.mean_loss,
            m.train_acc,
            m.val_acc.map(|v| format!(" val_acc {v:.2}")).unwrap_or_default()
        );
        if let Some(v) = m.val_acc {
            if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
                best = Some((v, m.epoch, backend.params().clone()));
            }
        }
        history.push(m);
    }
    let selected_epoch = match best {
        Some((_, epoch, params)) => {
            *backend.params_mut() = params;
            epoch
        }
        None => config.epochs,
    };
    Ok(TrainOutcome {
        history,
        selected_epoch,
        trainer,
        skipped: data.skipped,
    })
}

/// CSV with columns `epoch,step,mean_loss,train_acc,val_acc`.
pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,step,mean_loss,train_acc,val_acc\n");
    for m in history {
        let val = m.val_acc.map(|v| format!("{v:.2}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{:.10},{:.2},{}",
            m.epoch, m.step, m.mean_loss, m.train_acc, val
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn write_metrics_csv(path: &Path, history: &[EpochMetrics]) -> Result<(), TrainError> {
    fs::write(path, metrics_csv(history)).map_err(|e| TrainError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
