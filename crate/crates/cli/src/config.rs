//! JSON run configuration layered over a named preset.

use std::path::Path;

use serde::Deserialize;

use dar_core::model::ModelConfig;
use dar_core::presets::{self, Preset};
use dar_core::sampler::SamplingConfig;
use dar_core::train_harness::{DatasetSpec, TrainSettings};

use crate::Failure;

/// Every section is optional; missing ones come from the preset.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub model: Option<ModelConfig>,
    pub train: Option<TrainSettings>,
    pub sample: Option<SamplingConfig>,
    pub dataset: Option<DatasetSpec>,
}

pub fn parse_config(text: &str, origin: &str) -> Result<CliConfig, Failure> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Failure::Validation(format!(
            "{origin}: invalid config at `{path}`: {}",
            e.inner()
        ))
    })
}

pub fn read_config(path: &Path) -> Result<CliConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

/// The preset with any config-file sections substituted in.
pub fn resolve(preset: &str, config: Option<&Path>) -> Result<Preset, Failure> {
    let mut p = presets::by_name(preset).map_err(Failure::from)?;
    if let Some(path) = config {
        let c = read_config(path)?;
        if let Some(m) = c.model {
            p.model = m;
        }
        if let Some(t) = c.train {
            p.train = t;
        }
        if let Some(s) = c.sample {
            p.sample = s;
        }
        if let Some(d) = c.dataset {
            p.dataset = d;
        }
    }
    p.model.validate()?;
    p.train.validate()?;
    p.sample.validate()?;
    p.dataset.validate()?;
    Ok(p)
}
