//! Named bundles of model, training, and sampling settings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numerics::{AdamWConfig, LrSchedule};
use crate::sampler::SamplingConfig;
use crate::train_harness::{DatasetSpec, TrainSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub name: String,
    pub model: ModelConfig,
    pub train: TrainSettings,
    pub sample: SamplingConfig,
    /// Synthetic corpus matching the model's grid, vocabulary, and classes.
    pub dataset: DatasetSpec,
}

/// ImageNet-1k training images per epoch at batch 2048, rounded up.
const PAPER_STEPS_PER_EPOCH: u64 = 1_281_167_u64.div_ceil(2048);

fn paper(
    name: &str,
    model: ModelConfig,
    lr: f64,
    temperature: f64,
    scale_power: f64,
    guidance_scale: f64,
) -> Preset {
    let schedule = LrSchedule {
        base_lr: lr,
        warmup_epochs: 100.0,
        total_epochs: 400.0,
        ending_lr: 1e-5,
        steps_per_epoch: PAPER_STEPS_PER_EPOCH,
    };
    let dataset = DatasetSpec {
        shape: model.grid,
        vocab_size: model.vocab_size,
        num_classes: model.num_classes,
        samples_per_class: 10,
        noise_rate: 0.1,
        family: crate::train_harness::PatternFamily::Gradient,
        seed: 0,
    };
    Preset {
        name: name.into(),
        train: TrainSettings {
            schedule,
            optimizer: AdamWConfig {
                beta1: 0.9,
                beta2: 0.96,
                eps: 1e-8,
                weight_decay: 0.05,
                clip: Some(1.0),
            },
            batch_size: 2048,
            steps: schedule.total_steps(),
            seed: 0,
            codebook_seed: 0,
            checkpoint_every: None,
        },
        sample: SamplingConfig {
            guidance_scale,
            scale_power,
            temperature,
            ..SamplingConfig::default()
        },
        model,
        dataset,
    }
}

/// The published B / L / XL configurations.
pub fn paper_presets() -> Vec<Preset> {
    vec![
        paper("paper-b", ModelConfig::paper_b(), 1e-3, 1.02, 0.88, 4.7),
        paper("paper-l", ModelConfig::paper_l(), 4e-4, 1.04, 0.78, 4.5),
        paper("paper-xl", ModelConfig::paper_xl(), 4e-4, 1.02, 0.56, 4.3),
    ]
}

/// 8×8 grid, K = 64, eight classes; trains in well under a minute.
pub fn desk() -> Preset {
    Preset {
        name: "desk".into(),
        model: ModelConfig::desk(),
        train: TrainSettings::desk(),
        sample: SamplingConfig {
            guidance_scale: 1.5,
            scale_power: 1.0,
            ..SamplingConfig::default()
        },
        dataset: DatasetSpec::desk(),
    }
}

/// 4×4 grid, K = 16, hidden 16: for gradient checks and smoke tests.
pub fn tiny() -> Preset {
    let model = ModelConfig::tiny();
    Preset {
        name: "tiny".into(),
        train: TrainSettings {
            steps: 100,
            schedule: LrSchedule {
                steps_per_epoch: 10,
                warmup_epochs: 1.0,
                total_epochs: 10.0,
                ..TrainSettings::desk().schedule
            },
            ..TrainSettings::desk()
        },
        sample: SamplingConfig::default(),
        dataset: DatasetSpec {
            shape: model.grid,
            vocab_size: model.vocab_size,
            num_classes: model.num_classes,
            samples_per_class: 10,
            ..DatasetSpec::desk()
        },
        model,
    }
}

pub const PRESET_NAMES: [&str; 5] = ["tiny", "desk", "paper-b", "paper-l", "paper-xl"];

pub fn by_name(name: &str) -> Result<Preset> {
    match name {
        "tiny" => Ok(tiny()),
        "desk" => Ok(desk()),
        _ => paper_presets()
            .into_iter()
            .find(|p| p.name == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset `{name}`; expected one of {PRESET_NAMES:?}"
                ))
            }),
    }
}
