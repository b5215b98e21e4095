//! The module-ablation and adaptive-norm-condition matrices at desk scale.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::eval::{evaluate, EvalReport, EvalSettings};
use super::train::{train_on, TrainSettings};
use crate::error::{Error, Result};
use crate::grid_scan::ScanKind;
use crate::model::{config_fingerprint, AdalnCondition, ModelConfig};
use crate::rope::RopeMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationTable {
    /// Scan order × token-embedding / rope / direction toggles.
    Modules,
    /// What the adaptive norms are conditioned on.
    Adaln,
}

impl std::fmt::Display for AblationTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AblationTable::Modules => "modules",
            AblationTable::Adaln => "adaln",
        })
    }
}

/// One row of the matrix: which modules are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub table: AblationTable,
    pub scan: ScanKind,
    pub codebook_embeddings: bool,
    pub rope: RopeMode,
    pub adaln_condition: AdalnCondition,
}

impl AblationVariant {
    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            scan: self.scan,
            codebook_embeddings: self.codebook_embeddings,
            rope: self.rope,
            adaln_condition: self.adaln_condition,
            ..base.clone()
        }
    }

    pub fn label(&self) -> String {
        let mut on = Vec::new();
        if self.codebook_embeddings {
            on.push("code");
        }
        if self.rope == RopeMode::FourD {
            on.push("4d-rope");
        }
        match self.adaln_condition {
            AdalnCondition::Class => {}
            AdalnCondition::ClassDirection => on.push("dir"),
            AdalnCondition::ClassTimestep => on.push("timestep"),
        }
        let mods = if on.is_empty() {
            "none".to_string()
        } else {
            on.join("+")
        };
        format!("{} {}: {}", self.table, self.scan, mods)
    }
}

/// Eight module rows (scan × codebook / 4D rope / direction toggles) and
/// three adaptive-norm rows (class, class+timestep, class+direction).
pub fn ablation_matrix() -> Vec<AblationVariant> {
    let module = |scan, code, four_d: bool, dir: bool| AblationVariant {
        table: AblationTable::Modules,
        scan,
        codebook_embeddings: code,
        rope: if four_d {
            RopeMode::FourD
        } else {
            RopeMode::TwoD
        },
        adaln_condition: if dir {
            AdalnCondition::ClassDirection
        } else {
            AdalnCondition::Class
        },
    };
    let adaln = |cond| AblationVariant {
        table: AblationTable::Adaln,
        scan: ScanKind::Diagonal,
        codebook_embeddings: true,
        rope: RopeMode::FourD,
        adaln_condition: cond,
    };
    use ScanKind::{Diagonal, Raster};
    vec![
        module(Raster, false, false, false),
        module(Raster, true, true, true),
        module(Diagonal, false, false, false),
        module(Diagonal, false, true, true),
        module(Diagonal, true, false, false),
        module(Diagonal, true, true, false),
        module(Diagonal, true, false, true),
        module(Diagonal, true, true, true),
        adaln(AdalnCondition::Class),
        adaln(AdalnCondition::ClassTimestep),
        adaln(AdalnCondition::ClassDirection),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub variant: AblationVariant,
    pub fingerprint: String,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub final_loss: Option<f64>,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub settings: TrainSettings,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    /// Fixed-width comparison table.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<40} {:>10} {:>9} {:>8} {:>8} {:>10}\n",
            "variant", "train_loss", "val_loss", "val_acc", "mean_tv", "frechet"
        );
        for r in &self.rows {
            let loss = r.final_loss.map_or("-".into(), |l| format!("{l:.4}"));
            match (&r.report, &r.error) {
                (Some(e), _) => writeln!(
                    s,
                    "{:<40} {:>10} {:>9.4} {:>8.4} {:>8.4} {:>10.4}",
                    r.label, loss, e.val_loss, e.val_accuracy, e.mean_tv, e.proxy_frechet
                ),
                (None, err) => writeln!(
                    s,
                    "{:<40} {:>10} failed: {}",
                    r.label,
                    loss,
                    err.as_deref().unwrap_or("?")
                ),
            }
            .expect("string write");
        }
        s
    }
}

/// Worker count: `DAR_THREADS` if set and positive, else the machine's
/// available parallelism.
pub fn threads_from_env() -> usize {
    std::env::var("DAR_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

type Outcome = std::result::Result<(f64, EvalReport), (Option<f64>, String)>;

fn run_one(
    config: &ModelConfig,
    settings: &TrainSettings,
    eval: &EvalSettings,
    data: &Dataset,
) -> Outcome {
    let mut log = Vec::new();
    let params = train_on(config, settings, data, &mut log, |_, _| Ok(()))
        .map_err(|e| (log.last().map(|r| r.loss), e.to_string()))?;
    let final_loss = log.last().map_or(f64::NAN, |r| r.loss);
    let report = evaluate(&params, data, eval).map_err(|e| (Some(final_loss), e.to_string()))?;
    Ok((final_loss, report))
}

/// Train and evaluate every matrix row with the same seed and data.
/// Rows with identical model configurations share one run. Failed runs are
/// recorded in their rows; the rest continue.
pub fn ablate(
    base: &ModelConfig,
    settings: &TrainSettings,
    eval: &EvalSettings,
    data: &Dataset,
    threads: usize,
) -> Result<AblationReport> {
    let variants = ablation_matrix();
    let configs: Vec<ModelConfig> = variants.iter().map(|v| v.apply(base)).collect();
    let fingerprints: Vec<String> = configs.iter().map(config_fingerprint).collect();
    let mut jobs: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, f) in fingerprints.iter().enumerate() {
        jobs.entry(f.as_str()).or_insert(i);
    }
    let jobs: Vec<(&str, usize)> = jobs.into_iter().collect();

    let next = AtomicUsize::new(0);
    let results: Mutex<BTreeMap<String, Outcome>> = Mutex::new(BTreeMap::new());
    let workers = threads.clamp(1, jobs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::SeqCst);
                let Some((fp, i)) = jobs.get(j) else { break };
                let outcome = run_one(&configs[*i], settings, eval, data);
                results
                    .lock()
                    .expect("no poisoned workers")
                    .insert(fp.to_string(), outcome);
            });
        }
    });
    let results = results
        .into_inner()
        .map_err(|_| Error::Config("ablation worker panicked".into()))?;

    let dataset_fingerprint = data.fingerprint();
    let rows = variants
        .iter()
        .zip(&fingerprints)
        .map(|(v, fp)| {
            let (final_loss, report, error) = match results.get(fp) {
                Some(Ok((l, r))) => (Some(*l), Some(r.clone()), None),
                Some(Err((l, e))) => (*l, None, Some(e.clone())),
                None => (None, None, Some("run did not complete".into())),
            };
            AblationRow {
                label: v.label(),
                variant: *v,
                fingerprint: fp.clone(),
                seed: settings.seed,
                dataset_fingerprint: dataset_fingerprint.clone(),
                final_loss,
                report,
                error,
            }
        })
        .collect();
    Ok(AblationReport {
        seed: settings.seed,
        dataset_fingerprint,
        settings: settings.clone(),
        rows,
    })
}

/// [`ablate`], then write the JSON report to `out`.
pub fn ablate_to(
    base: &ModelConfig,
    settings: &TrainSettings,
    eval: &EvalSettings,
    data: &Dataset,
    threads: usize,
    out: &Path,
) -> Result<AblationReport> {
    let report = ablate(base, settings, eval, data, threads)?;
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(out, json).map_err(|e| Error::io(out, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_shape() {
        let m = ablation_matrix();
        assert_eq!(
            m.iter()
                .filter(|v| v.table == AblationTable::Modules)
                .count(),
            8
        );
        assert_eq!(
            m.iter().filter(|v| v.table == AblationTable::Adaln).count(),
            3
        );
        // The plain diagonal row: 2D rope and learned token table.
        let plain = &m[2];
        assert_eq!(
            (plain.scan, plain.rope, plain.codebook_embeddings),
            (ScanKind::Diagonal, RopeMode::TwoD, false)
        );
        assert_eq!(plain.adaln_condition, AdalnCondition::Class);
        let labels: std::collections::BTreeSet<_> = m.iter().map(|v| v.label()).collect();
        assert_eq!(labels.len(), 11);
    }
}
