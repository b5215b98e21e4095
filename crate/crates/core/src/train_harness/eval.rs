//! Held-out likelihood, sample statistics, and the proxy-Fréchet score.

use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::frechet::{frechet_gaussian, GaussianStats};
use super::train::{check_compatible, scan_sequences};
use crate::codebook::{decode, Codebook, TokenGrid};
use crate::error::{Error, Result};
use crate::model::{
    build_layout, config_fingerprint, forward, load_checkpoint, split_inputs, ForwardBatch,
    ForwardOptions, ModelParams,
};
use crate::numerics::graph::log_sum_exp;
use crate::sampler::{argmax, sample, SamplingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    /// Grids drawn per class.
    pub sample_count: usize,
    /// Guidance, temperature, and seed for the draws; `class_label` and
    /// `batch` are overridden per class.
    pub sampling: SamplingConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            sample_count: 4,
            sampling: SamplingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fingerprint: String,
    pub dataset_fingerprint: String,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub samples_per_class: usize,
    /// Total-variation distance per class between the token histograms of
    /// generated and training grids.
    pub class_tv: Vec<f64>,
    pub mean_tv: f64,
    pub proxy_frechet: f64,
}

/// Token counts per class.
pub fn class_histograms<'a>(
    grids: impl IntoIterator<Item = &'a TokenGrid>,
    vocab: usize,
    classes: usize,
) -> Vec<Vec<u64>> {
    let mut h = vec![vec![0u64; vocab]; classes];
    for g in grids {
        for t in &g.tokens {
            h[g.class_label as usize][*t as usize] += 1;
        }
    }
    h
}

/// `½ Σ |p − q|` between two normalized histograms; 1 if exactly one is
/// empty, 0 if both are.
pub fn histogram_tv(a: &[u64], b: &[u64]) -> f64 {
    let (na, nb) = (a.iter().sum::<u64>(), b.iter().sum::<u64>());
    match (na, nb) {
        (0, 0) => return 0.0,
        (0, _) | (_, 0) => return 1.0,
        _ => {}
    }
    let tv = 0.5
        * a.iter()
            .zip(b)
            .map(|(x, y)| (*x as f64 / na as f64 - *y as f64 / nb as f64).abs())
            .sum::<f64>();
    tv.clamp(0.0, 1.0)
}

/// Per-sample features: the decoded code vectors averaged over cells.
pub fn proxy_features<'a>(
    grids: impl IntoIterator<Item = &'a TokenGrid>,
    cb: &Codebook,
) -> Result<Array2<f64>> {
    let rows = grids
        .into_iter()
        .map(|g| {
            Ok(decode(g, cb)?
                .mean_axis(Axis(0))
                .expect("h>0")
                .mean_axis(Axis(0))
                .expect("w>0"))
        })
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    ndarray::stack(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
}

/// Mean next-token loss and accuracy of `params` on `idx`.
pub fn held_out_metrics(params: &ModelParams, data: &Dataset, idx: &[usize]) -> Result<(f64, f64)> {
    if idx.is_empty() {
        return Err(Error::Config("no held-out samples to evaluate".into()));
    }
    let layout = build_layout(params.config.grid, params.config.scan);
    let (mut nll, mut correct, mut count) = (0.0, 0usize, 0usize);
    for chunk in idx.chunks(32) {
        let seqs = scan_sequences(&layout, data, chunk);
        let batch = ForwardBatch {
            layout: &layout,
            inputs: split_inputs(&seqs),
            classes: chunk
                .iter()
                .map(|i| data.samples[*i].class_label as usize)
                .collect(),
        };
        let logits = forward(params, &batch, &mut ForwardOptions::eval())?;
        for (row, target) in logits.rows().into_iter().zip(seqs.iter().flatten()) {
            let row = row.to_vec();
            nll += log_sum_exp(row.iter().copied()) - row[*target as usize];
            correct += usize::from(argmax(&row) == *target as usize);
            count += 1;
        }
    }
    Ok((nll / count as f64, correct as f64 / count as f64))
}

pub fn evaluate(
    params: &ModelParams,
    data: &Dataset,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    check_compatible(&params.config, data)?;
    if settings.sample_count == 0 {
        return Err(Error::Config("sample_count must be >= 1".into()));
    }
    let split = data.split();
    let (val_loss, val_accuracy) = held_out_metrics(params, data, &split.val)?;

    let mut generated = Vec::with_capacity(data.num_classes * settings.sample_count);
    for k in 0..data.num_classes {
        let cfg = SamplingConfig {
            class_label: k,
            batch: settings.sample_count,
            seed: settings.sampling.seed.wrapping_add(k as u64),
            ..settings.sampling.clone()
        };
        generated.extend(sample(params, &cfg)?);
    }
    let train: Vec<&TokenGrid> = split.train.iter().map(|i| &data.samples[*i]).collect();
    let h_train = class_histograms(train.iter().copied(), data.vocab_size, data.num_classes);
    let h_gen = class_histograms(&generated, data.vocab_size, data.num_classes);
    let class_tv: Vec<f64> = h_gen
        .iter()
        .zip(&h_train)
        .map(|(a, b)| histogram_tv(a, b))
        .collect();
    let mean_tv = class_tv.iter().sum::<f64>() / class_tv.len() as f64;

    let cb = params.codebook()?;
    let fa = GaussianStats::fit(proxy_features(&generated, &cb)?.view())?;
    let fb = GaussianStats::fit(proxy_features(train.iter().copied(), &cb)?.view())?;
    let proxy_frechet = frechet_gaussian(&fa, &fb)?;

    Ok(EvalReport {
        fingerprint: config_fingerprint(&params.config),
        dataset_fingerprint: data.fingerprint(),
        val_loss,
        val_accuracy,
        samples_per_class: settings.sample_count,
        class_tv,
        mean_tv,
        proxy_frechet,
    })
}

/// [`evaluate`] on files; the report carries the checkpoint's fingerprint.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    dataset: &Path,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    let (header, params) = load_checkpoint(checkpoint)?;
    let data = Dataset::load(dataset)?;
    let mut report = evaluate(&params, &data, settings)?;
    debug_assert_eq!(report.fingerprint, header.fingerprint);
    report.fingerprint = header.fingerprint;
    Ok(report)
}
