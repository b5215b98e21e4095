//! The training loop: shuffled mini-batches, class dropout, AdamW.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::codebook::make_codebook;
use crate::error::{Error, Result};
use crate::model::{
    build_layout, forward_graph, nll_loss, save_checkpoint, split_inputs, ForwardBatch,
    ForwardOptions, ModelConfig, ModelParams, SequenceLayout,
};
use crate::numerics::{adamw_step, AdamWConfig, Graph, LrSchedule, OptimizerState};

/// Optimization hyper-parameters, independent of the model shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub schedule: LrSchedule,
    #[serde(default)]
    pub optimizer: AdamWConfig,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    /// Seed of the generated codebook the token embeddings are read from.
    #[serde(default)]
    pub codebook_seed: u64,
    /// Also write a checkpoint every this many steps.
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
}

impl TrainSettings {
    /// Fast desk-scale settings: 300 steps of batch 16.
    pub fn desk() -> Self {
        Self {
            schedule: LrSchedule {
                base_lr: 3e-3,
                warmup_epochs: 1.0,
                total_epochs: 20.0,
                ending_lr: 1e-5,
                steps_per_epoch: 15,
            },
            optimizer: AdamWConfig::default(),
            batch_size: 16,
            steps: 300,
            seed: 0,
            codebook_seed: 0,
            checkpoint_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be >= 1".into()));
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1)
            || !(0.0..1.0).contains(&o.beta2)
            || !(o.eps > 0.0)
            || o.weight_decay < 0.0
        {
            return Err(Error::Config(format!("invalid optimizer settings {o:?}")));
        }
        if o.clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("clip must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub settings: TrainSettings,
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    /// CSV of `step,lr,loss`.
    pub loss_log: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from("step,lr,loss\n");
    for r in rows {
        writeln!(s, "{},{},{}", r.step, r.lr, r.loss).expect("string write");
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub params: ModelParams,
    pub log: Vec<LogRow>,
}

impl TrainRun {
    pub fn final_loss(&self) -> f64 {
        self.log.last().map_or(f64::NAN, |r| r.loss)
    }
}

/// Independent random streams of one run.
const STREAM_SHUFFLE: u64 = 1;
const STREAM_CLASS_DROP: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

pub fn check_compatible(model: &ModelConfig, data: &Dataset) -> Result<()> {
    if data.shape != model.grid
        || data.vocab_size != model.vocab_size
        || data.num_classes > model.num_classes
    {
        return Err(Error::Config(format!(
            "dataset ({} grid, K={}, {} classes) does not fit model ({} grid, K={}, {} classes)",
            data.shape,
            data.vocab_size,
            data.num_classes,
            model.grid,
            model.vocab_size,
            model.num_classes
        )));
    }
    Ok(())
}

/// Scan-ordered token sequences of the given samples.
pub fn scan_sequences(layout: &SequenceLayout, data: &Dataset, idx: &[usize]) -> Vec<Vec<u32>> {
    idx.iter()
        .map(|i| layout.order.gather(&data.samples[*i].tokens))
        .collect()
}

/// Train on the training split of `data`. Every completed step is appended
/// to `log`, so a failed run keeps its history; `on_checkpoint` fires every
/// `checkpoint_every` steps.
pub fn train_on(
    model: &ModelConfig,
    settings: &TrainSettings,
    data: &Dataset,
    log: &mut Vec<LogRow>,
    mut on_checkpoint: impl FnMut(u64, &ModelParams) -> Result<()>,
) -> Result<ModelParams> {
    model.validate()?;
    settings.validate()?;
    check_compatible(model, data)?;
    let train_idx = data.split().train;
    if train_idx.is_empty() {
        return Err(Error::Config("dataset has no training samples".into()));
    }
    let codebook = make_codebook(model.vocab_size, model.code_dim, settings.codebook_seed)?;
    let mut params = ModelParams::init(model, &codebook, settings.seed)?;
    let layout = build_layout(model.grid, model.scan);
    let mut opt = OptimizerState::new(&params.store);

    let mut shuffle_rng = stream(settings.seed, STREAM_SHUFFLE);
    let mut class_rng = stream(settings.seed, STREAM_CLASS_DROP);
    let mut drop_rng = stream(settings.seed, STREAM_DROPOUT);
    let mut order = train_idx.clone();
    let mut cursor = order.len();

    for step in 0..settings.steps {
        let mut idx = Vec::with_capacity(settings.batch_size);
        while idx.len() < settings.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let seqs = scan_sequences(&layout, data, &idx);
        let classes = idx
            .iter()
            .map(|i| {
                let drop =
                    model.class_dropout > 0.0 && class_rng.random::<f64>() < model.class_dropout;
                if drop {
                    model.null_class()
                } else {
                    data.samples[*i].class_label as usize
                }
            })
            .collect();

        let at_step = |e: Error| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("step {step}: {m}")),
            other => other,
        };
        let mut g = Graph::new();
        let vars = params.store.bind(&mut g);
        let batch = ForwardBatch {
            layout: &layout,
            inputs: split_inputs(&seqs),
            classes,
        };
        let logits = forward_graph(
            &mut g,
            &params,
            &vars,
            &batch,
            &mut ForwardOptions::train(&mut drop_rng),
        )
        .map_err(at_step)?;
        let loss = nll_loss(&mut g, logits, &seqs)?;
        let loss_value = g.value(loss)[[0, 0]];
        if !loss_value.is_finite() {
            return Err(Error::NonFinite(format!(
                "step {step}: loss is {loss_value}"
            )));
        }
        let mut grads = g.backward(loss).map_err(at_step)?;
        let grads = vars
            .iter()
            .zip(params.store.iter())
            .map(|(v, p)| if p.trainable { grads.take(*v) } else { None })
            .collect();
        let lr = settings.schedule.lr_at(step);
        adamw_step(&mut params.store, grads, &mut opt, &settings.optimizer, lr)?;
        log.push(LogRow {
            step,
            lr,
            loss: loss_value,
        });
        if let Some(every) = settings.checkpoint_every {
            if (step + 1) % every == 0 && step + 1 < settings.steps {
                on_checkpoint(step + 1, &params)?;
            }
        }
    }
    Ok(params)
}

fn interval_path(base: &Path, step: u64) -> PathBuf {
    let stem = base
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("checkpoint");
    base.with_file_name(format!("{stem}.step{step}.darck"))
}

/// Load the dataset, train, and write the final checkpoint plus the loss
/// log. The log is written even when training aborts.
pub fn train(config: &TrainConfig) -> Result<TrainRun> {
    let data = Dataset::load(&config.dataset)?;
    let mut log = Vec::new();
    let result = train_on(
        &config.model,
        &config.settings,
        &data,
        &mut log,
        |step, p| save_checkpoint(p, &interval_path(&config.checkpoint, step)),
    );
    std::fs::write(&config.loss_log, log_csv(&log)).map_err(|e| Error::io(&config.loss_log, e))?;
    let params = result?;
    save_checkpoint(&params, &config.checkpoint)?;
    Ok(TrainRun { params, log })
}
