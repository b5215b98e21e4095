//! `dar`: scan statistics, data generation, training, sampling, evaluation,
//! ablations, benchmarks, and gradient checks.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime
//! failure.

mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use dar_core::codebook::{decode, render};
use dar_core::grid_scan::{GridShape, ScanKind};
use dar_core::model::{config_fingerprint, load_checkpoint, model_grad_check, ModelParams};
use dar_core::numerics::GradCheckOptions;
use dar_core::presets::Preset;
use dar_core::sampler::{bench, sample};
use dar_core::train_harness::{
    ablate_to, evaluate_checkpoint, generate_dataset, threads_from_env, train, Dataset,
    EvalSettings, TrainConfig,
};

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Runtime(m) => write!(f, "failed: {m}"),
        }
    }
}

impl From<dar_core::Error> for Failure {
    fn from(e: dar_core::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(
    name = "dar",
    version,
    about = "Direction-aware diagonal autoregressive image generation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Seed overriding every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory (see each subcommand).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct Setup {
    /// Named preset supplying defaults: tiny, desk, paper-b, paper-l, paper-xl.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// JSON file with optional `model`, `train`, `sample`, `dataset` sections.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Scan-order adjacency statistics as JSON (--out: JSON file).
    Scan {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, default_value = "diagonal")]
        order: ScanKind,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic dataset (--out: dataset file).
    GenData {
        #[command(flatten)]
        setup: Setup,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model (--out: run directory).
    Train {
        #[command(flatten)]
        setup: Setup,
        /// Dataset file; generated from the `dataset` section when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Sample token grids from a checkpoint (--out: directory for images and manifest).
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        setup: Setup,
        #[arg(long)]
        class: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        /// Greedy decoding.
        #[arg(long)]
        argmax: bool,
        /// Pixels per token in the written images.
        #[arg(long, default_value_t = 8)]
        pixel_scale: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on a dataset (--out: report file).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Grids sampled per class.
        #[arg(long, default_value_t = 4)]
        samples: usize,
        #[command(flatten)]
        setup: Setup,
        #[command(flatten)]
        common: Common,
    },
    /// Run the module and adaptive-norm ablation matrices (--out: report file).
    Ablate {
        #[command(flatten)]
        setup: Setup,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Sampling throughput (--out: JSON file).
    Bench {
        #[command(flatten)]
        setup: Setup,
        /// Benchmark this checkpoint instead of a freshly initialized model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference gradient check of the full model (--out: JSON file).
    Gradcheck {
        #[arg(long, default_value = "tiny")]
        preset: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Check at most this many elements per parameter tensor.
        #[arg(long)]
        max_elements: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))? + "\n";
    fs::write(path, text)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    // A closed pipe (e.g. `| head`) is not a failure of the command.
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(Failure::Runtime(format!("stdout: {e}")))
        }
        _ => Ok(()),
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn resolve(setup: &Setup, seed: Option<u64>) -> CliResult<Preset> {
    let mut p = config::resolve(&setup.preset, setup.config.as_deref())?;
    if let Some(s) = seed {
        p.train.seed = s;
        p.sample.seed = s;
        p.dataset.seed = s;
    }
    Ok(p)
}

fn load_or_generate(data: Option<&Path>, preset: &Preset) -> CliResult<Dataset> {
    Ok(match data {
        Some(path) => Dataset::load(path)?,
        None => generate_dataset(&preset.dataset)?,
    })
}

fn run(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Scan {
            height,
            width,
            order,
            common,
        } => {
            let shape = GridShape::new(height, width)?;
            let o = order.order(shape);
            let stats = if o.len() >= 2 {
                Some(o.adjacency_stats()?)
            } else {
                None
            };
            let report = json!({
                "height": height,
                "width": width,
                "order": order,
                "len": o.len(),
                "max_step_dist": stats.as_ref().map(|s| s.max_step_dist),
                "mean_step_dist": stats.as_ref().map(|s| s.mean_step_dist),
                "direction_histogram": stats.as_ref().map(|s| &s.direction_histogram),
                "positions": o.positions,
            });
            if let Some(out) = &common.out {
                write_json(out, &report)?;
            }
            print_json(&report)
        }
        Cmd::GenData { setup, common } => {
            let p = resolve(&setup, common.seed)?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("dataset.dards"));
            let data = generate_dataset(&p.dataset)?;
            data.save(&out)?;
            print_json(&json!({
                "path": out,
                "samples": data.len(),
                "fingerprint": data.fingerprint(),
            }))
        }
        Cmd::Train {
            setup,
            data,
            common,
        } => {
            let p = resolve(&setup, common.seed)?;
            let dir = common.out.unwrap_or_else(|| PathBuf::from("run"));
            ensure_dir(&dir)?;
            let data_path = match data {
                Some(d) => d,
                None => {
                    let path = dir.join("dataset.dards");
                    generate_dataset(&p.dataset)?.save(&path)?;
                    path
                }
            };
            let cfg = TrainConfig {
                model: p.model.clone(),
                settings: p.train.clone(),
                dataset: data_path,
                checkpoint: dir.join("checkpoint.darck"),
                loss_log: dir.join("loss.csv"),
            };
            write_json(&dir.join("config.json"), &cfg)?;
            let run = train(&cfg)?;
            let summary = json!({
                "steps": run.log.len(),
                "final_loss": run.final_loss(),
                "fingerprint": config_fingerprint(&cfg.model),
                "checkpoint": cfg.checkpoint,
                "loss_log": cfg.loss_log,
            });
            write_json(&dir.join("summary.json"), &summary)?;
            print_json(&summary)
        }
        Cmd::Sample {
            checkpoint,
            setup,
            class,
            batch,
            argmax,
            pixel_scale,
            common,
        } => {
            let p = resolve(&setup, common.seed)?;
            let (header, params) = load_checkpoint(&checkpoint)?;
            let mut cfg = p.sample.clone();
            if let Some(c) = class {
                cfg.class_label = c;
            }
            if let Some(b) = batch {
                cfg.batch = b;
            }
            cfg.argmax |= argmax;
            let grids = sample(&params, &cfg)?;
            let dir = common.out.unwrap_or_else(|| PathBuf::from("samples"));
            ensure_dir(&dir)?;
            let cb = params.codebook()?;
            let mut images = Vec::with_capacity(grids.len());
            for (i, g) in grids.iter().enumerate() {
                let name = format!("sample_{i:03}.ppm");
                render(decode(g, &cb)?.view(), pixel_scale.max(1)).save_ppm(&dir.join(&name))?;
                images.push(name);
            }
            let manifest = json!({
                "seed": cfg.seed,
                "class": cfg.class_label,
                "fingerprint": header.fingerprint,
                "config": cfg,
                "shape": params.config.grid,
                "images": images,
                "grids": grids.iter().map(|g| &g.tokens).collect::<Vec<_>>(),
            });
            write_json(&dir.join("manifest.json"), &manifest)?;
            print_json(&manifest)
        }
        Cmd::Eval {
            checkpoint,
            data,
            samples,
            setup,
            common,
        } => {
            let p = resolve(&setup, common.seed)?;
            let settings = EvalSettings {
                sample_count: samples,
                sampling: p.sample,
            };
            let report = evaluate_checkpoint(&checkpoint, &data, &settings)?;
            if let Some(out) = &common.out {
                write_json(out, &report)?;
            }
            print_json(&report)
        }
        Cmd::Ablate {
            setup,
            data,
            samples,
            common,
        } => {
            let p = resolve(&setup, common.seed)?;
            let data = load_or_generate(data.as_deref(), &p)?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("ablation.json"));
            let eval = EvalSettings {
                sample_count: samples,
                sampling: p.sample.clone(),
            };
            let report = ablate_to(&p.model, &p.train, &eval, &data, threads_from_env(), &out)?;
            eprint!("{}", report.table());
            let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
            print_json(&json!({ "path": out, "rows": report.rows.len(), "failed": failed }))?;
            if failed > 0 {
                return Err(Failure::Runtime(format!("{failed} ablation runs failed")));
            }
            Ok(())
        }
        Cmd::Bench {
            setup,
            checkpoint,
            batch,
            repeats,
            common,
        } => {
            let p = resolve(&setup, common.seed)?;
            let params = match checkpoint {
                Some(path) => load_checkpoint(&path)?.1,
                None => {
                    let cb = dar_core::codebook::make_codebook(
                        p.model.vocab_size,
                        p.model.code_dim,
                        p.train.codebook_seed,
                    )?;
                    ModelParams::init(&p.model, &cb, p.train.seed)?
                }
            };
            let cfg = dar_core::sampler::SamplingConfig {
                batch,
                ..p.sample.clone()
            };
            let report = bench(&params, &cfg, repeats)?;
            if let Some(out) = &common.out {
                write_json(out, &report)?;
            }
            print_json(&report)
        }
        Cmd::Gradcheck {
            preset,
            config,
            max_elements,
            common,
        } => {
            let p = config::resolve(&preset, config.as_deref())?;
            let opts = GradCheckOptions {
                max_elements_per_input: max_elements,
                ..GradCheckOptions::default()
            };
            let r = model_grad_check(&p.model, common.seed.unwrap_or(0), 2, opts)?;
            let tolerance = 1e-3;
            let report = json!({
                "preset": preset,
                "max_rel_error": r.max_rel_error,
                "max_abs_error": r.max_abs_error,
                "checked": r.checked,
                "tolerance": tolerance,
                "pass": r.max_rel_error < tolerance,
            });
            if let Some(out) = &common.out {
                write_json(out, &report)?;
            }
            print_json(&report)?;
            if r.max_rel_error >= tolerance {
                return Err(Failure::Runtime(format!(
                    "max relative error {:e} exceeds {tolerance:e}",
                    r.max_rel_error
                )));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dar: {f}");
            ExitCode::from(f.code())
        }
    }
}
