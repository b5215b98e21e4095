//! Classifier-free guided autoregressive sampling with KV caches.

pub mod decoder;
pub mod guidance;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use decoder::{Decoder, KvCache, SlotInput};
pub use guidance::{cfg_combine, guidance_at};

use crate::codebook::TokenGrid;
use crate::error::{Error, Result};
use crate::model::{build_layout, ModelParams};
use crate::numerics::graph::softmax_into;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub guidance_scale: f64,
    pub scale_power: f64,
    pub temperature: f64,
    pub class_label: usize,
    pub seed: u64,
    pub batch: usize,
    /// Greedy decoding: take the arg-max of the guided logits.
    #[serde(default)]
    pub argmax: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            guidance_scale: 1.0,
            scale_power: 1.0,
            temperature: 1.0,
            class_label: 0,
            seed: 0,
            batch: 1,
            argmax: false,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.guidance_scale >= 1.0) || !self.guidance_scale.is_finite() {
            return Err(Error::Config(format!(
                "guidance_scale must be >= 1, got {}",
                self.guidance_scale
            )));
        }
        if !(self.scale_power > 0.0) || !self.scale_power.is_finite() {
            return Err(Error::Config(format!(
                "scale_power must be > 0, got {}",
                self.scale_power
            )));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        Ok(())
    }
}

/// Draw an index from `softmax(logits)` using one uniform variate.
pub fn sample_categorical(logits: &[f64], rng: &mut impl Rng) -> usize {
    let mut probs = vec![0.0; logits.len()];
    softmax_into(logits, &mut probs);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` just under 1: fall back to the last non-zero entry.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Lowest index of the maximum.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in logits.iter().enumerate() {
        if *v > logits[best] {
            best = i;
        }
    }
    best
}

/// Generate `cfg.batch` grids of class `cfg.class_label` in the model's scan
/// order. Deterministic given the seed.
pub fn sample(params: &ModelParams, cfg: &SamplingConfig) -> Result<Vec<TokenGrid>> {
    cfg.validate()?;
    let c = &params.config;
    if cfg.class_label >= c.num_classes {
        return Err(Error::Index(format!(
            "class {} with {} classes",
            cfg.class_label, c.num_classes
        )));
    }
    let layout = build_layout(c.grid, c.scan);
    let decoder = Decoder::new(params, &layout)?;
    let total = layout.len();
    let guided = cfg.guidance_scale != 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grids = Vec::with_capacity(cfg.batch);
    for _ in 0..cfg.batch {
        let mut cond_cache = decoder.new_cache();
        let mut uncond_cache = decoder.new_cache();
        let mut tokens = vec![0u32; c.grid.len()];
        let mut input = SlotInput::Class;
        for slot in 0..total {
            let cond = decoder.step(&mut cond_cache, input, cfg.class_label)?;
            let mut logits = if guided {
                let uncond = decoder.step(&mut uncond_cache, input, c.null_class())?;
                let w = guidance_at(slot, total, cfg.guidance_scale, cfg.scale_power);
                cfg_combine(&cond, &uncond, w)?
            } else {
                cond
            };
            let tok = if cfg.argmax {
                argmax(&logits)
            } else {
                logits.iter_mut().for_each(|v| *v /= cfg.temperature);
                sample_categorical(&logits, &mut rng)
            } as u32;
            let pos = layout.order.positions[slot];
            tokens[c.grid.raster_index(pos)] = tok;
            input = SlotInput::Token(tok);
        }
        grids.push(TokenGrid::new(c.grid, tokens, cfg.class_label as u32)?);
    }
    Ok(grids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub batch: usize,
    pub tokens_per_image: usize,
    /// Wall-clock seconds of each repeat, in run order.
    pub seconds: Vec<f64>,
    pub tokens_per_sec: f64,
    pub images_per_sec: f64,
}

/// Time `repeats` sampling runs of `batch` grids; rates use the median.
pub fn bench(params: &ModelParams, cfg: &SamplingConfig, repeats: usize) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    let mut seconds = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        std::hint::black_box(sample(params, cfg)?);
        seconds.push(t0.elapsed().as_secs_f64());
    }
    let mut sorted = seconds.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let tokens_per_image = params.config.grid.len();
    let tokens_per_sec = (cfg.batch * tokens_per_image) as f64 / median.max(1e-12);
    Ok(BenchReport {
        batch: cfg.batch,
        tokens_per_image,
        seconds,
        tokens_per_sec,
        images_per_sec: tokens_per_sec / tokens_per_image as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
    }

    #[test]
    fn categorical_respects_zero_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_ne!(
                sample_categorical(&[0.0, f64::NEG_INFINITY, 0.0], &mut rng),
                1
            );
        }
    }

    #[test]
    fn config_validation() {
        assert!(SamplingConfig::default().validate().is_ok());
        for bad in [
            SamplingConfig {
                guidance_scale: 0.5,
                ..Default::default()
            },
            SamplingConfig {
                scale_power: 0.0,
                ..Default::default()
            },
            SamplingConfig {
                temperature: 0.0,
                ..Default::default()
            },
            SamplingConfig {
                batch: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
