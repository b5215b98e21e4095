//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dar_core::codebook::make_codebook;
use dar_core::grid_scan::{diagonal_order, raster_order, DirectionLabel, GridShape, Position2D};
use dar_core::model::{
    build_layout, forward, model_grad_check, split_inputs, ForwardBatch, ForwardOptions,
    ModelConfig, ModelParams,
};
use dar_core::numerics::GradCheckOptions;
use dar_core::presets;
use dar_core::rope::{apply_rotation, rotation_table, Position4D, RopeMode};
use dar_core::sampler::{cfg_combine, guidance_at, sample, Decoder, SamplingConfig, SlotInput};
use dar_core::train_harness::{
    ablate, frechet_gaussian, generate_dataset, threads_from_env, train_on, AblationTable,
    EvalSettings, GaussianStats,
};
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn params(config: &ModelConfig, seed: u64, modulate: bool) -> ModelParams {
    let cb = make_codebook(config.vocab_size, config.code_dim, seed).unwrap();
    let mut p = ModelParams::init(config, &cb, seed).unwrap();
    if modulate {
        // Zero-initialized modulation hides the conditioning path; wake it up.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for l in p.ids.layers.clone() {
            p.store
                .get_mut(l.ada_w)
                .value
                .mapv_inplace(|_| rng.random_range(-0.1..0.1));
        }
    }
    p
}

fn random_seq(rng: &mut ChaCha8Rng, len: usize, k: usize) -> Vec<u32> {
    (0..len).map(|_| rng.random_range(0..k as u32)).collect()
}

fn scan_correctness() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for h in 1..=32 {
        for w in 1..=32 {
            let shape = GridShape::new(h, w).unwrap();
            let o = diagonal_order(shape);
            let mut seen = vec![false; h * w];
            for p in &o.positions {
                let (x, y) = (p.x as usize, p.y as usize);
                if x >= h || y >= w || seen[x * w + y] {
                    return Err(format!("{h}x{w}: not a bijection at {p:?}"));
                }
                seen[x * w + y] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(format!("{h}x{w}: cells missing"));
            }
            for pair in o.positions.windows(2) {
                let (dx, dy) = (
                    (pair[1].x - pair[0].x) as f64,
                    (pair[1].y - pair[0].y) as f64,
                );
                worst = worst.max((dx * dx + dy * dy).sqrt());
            }
        }
    }
    let r = raster_order(GridShape::new(16, 16).unwrap())
        .adjacency_stats()
        .unwrap();
    let raster_ok = (r.max_step_dist - 226f64.sqrt()).abs() < 1e-12;
    let secs = t0.elapsed().as_secs_f64();
    check(
        worst <= 2f64.sqrt() + 1e-12 && raster_ok && secs < 1.0,
        format!(
            "max diagonal step {worst:.6}, raster 16x16 max {:.6}, {secs:.3}s",
            r.max_step_dist
        ),
    )
}

fn diagonal_3x3() -> Outcome {
    use DirectionLabel::*;
    let p = Position2D::new;
    // Worked by hand from the traversal rule.
    let want = [
        p(0, 0),
        p(1, 0),
        p(0, 1),
        p(0, 2),
        p(1, 1),
        p(2, 0),
        p(2, 1),
        p(1, 2),
        p(2, 2),
    ];
    let o = diagonal_order(GridShape::new(3, 3).unwrap());
    let hist = o.adjacency_stats().unwrap().direction_histogram;
    let want_hist: BTreeMap<_, _> = [(Right, 2), (Down, 2), (UpRight, 2), (DownLeft, 2)].into();
    check(
        o.positions == want && hist == want_hist,
        format!(
            "positions {:?}, histogram {hist:?}",
            o.positions.iter().map(|q| (q.x, q.y)).collect::<Vec<_>>()
        ),
    )
}

fn rope_properties() -> Outcome {
    const D: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pos = |rng: &mut ChaCha8Rng| {
        Position2D::new(rng.random_range(-40..40), rng.random_range(-40..40))
    };
    let (mut norm_err, mut shift_err): (f64, f64) = (0.0, 0.0);
    let mut insensitive = 0;
    for mode in [RopeMode::TwoD, RopeMode::FourD] {
        for _ in 0..100 {
            let (a, b) = (
                Position4D {
                    cur: pos(&mut rng),
                    nxt: pos(&mut rng),
                },
                Position4D {
                    cur: pos(&mut rng),
                    nxt: pos(&mut rng),
                },
            );
            let d = pos(&mut rng);
            let sh = |q: Position2D| Position2D::new(q.x + d.x, q.y + d.y);
            let (sa, sb) = (
                Position4D {
                    cur: sh(a.cur),
                    nxt: sh(a.nxt),
                },
                Position4D {
                    cur: sh(b.cur),
                    nxt: sh(b.nxt),
                },
            );
            let q: Vec<f64> = (0..D).map(|_| rng.random_range(-3.0..3.0)).collect();
            let k: Vec<f64> = (0..D).map(|_| rng.random_range(-3.0..3.0)).collect();
            let table = rotation_table(&[a, b, sa, sb], D, mode).unwrap();
            let mut x = Array2::zeros((4, D));
            for (r, v) in [&q, &k, &q, &k].into_iter().enumerate() {
                x.row_mut(r)
                    .assign(&ndarray::ArrayView1::from(v.as_slice()));
            }
            let y = apply_rotation(x.view(), &table).unwrap();
            for r in 0..4 {
                let n0 = x.row(r).dot(&x.row(r)).sqrt();
                let n1 = y.row(r).dot(&y.row(r)).sqrt();
                norm_err = norm_err.max((n0 - n1).abs());
            }
            shift_err = shift_err.max((y.row(0).dot(&y.row(1)) - y.row(2).dot(&y.row(3))).abs());
        }
    }
    for _ in 0..100 {
        let cur = pos(&mut rng);
        let n1 = pos(&mut rng);
        let mut n2 = pos(&mut rng);
        if n2 == n1 {
            n2.x += 1;
        }
        let t = rotation_table(
            &[Position4D { cur, nxt: n1 }, Position4D { cur, nxt: n2 }],
            D,
            RopeMode::FourD,
        )
        .unwrap();
        if (0..t.slots()).all(|j| t.entry(0, j) == t.entry(1, j)) {
            insensitive += 1;
        }
    }
    check(
        norm_err <= 1e-10 && shift_err <= 1e-8 && insensitive == 0,
        format!("norm err {norm_err:.2e}, shift err {shift_err:.2e}, 4D rows blind to nxt: {insensitive}/100"),
    )
}

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let c = ModelConfig::tiny();
    let shape_ok = c.layers == 2
        && c.hidden_size == 16
        && c.heads == 4
        && c.vocab_size == 16
        && c.grid.len() == 16;
    let r = model_grad_check(&c, 7, 2, GradCheckOptions::default()).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    check(
        shape_ok && r.max_rel_error < 1e-3 && secs < 60.0,
        format!(
            "max rel error {:.2e} over {} elements, {secs:.1}s",
            r.max_rel_error, r.checked
        ),
    )
}

fn frozen_codebook() -> Outcome {
    let p = presets::tiny();
    let data = generate_dataset(&p.dataset).unwrap();
    let settings = dar_core::train_harness::TrainSettings {
        steps: 100,
        ..p.train
    };
    let mut log = Vec::new();
    let trained =
        train_on(&p.model, &settings, &data, &mut log, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let cb = make_codebook(p.model.vocab_size, p.model.code_dim, settings.codebook_seed).unwrap();
    let init = ModelParams::init(&p.model, &cb, settings.seed).unwrap();
    let frozen = trained.store.by_name("tok.codebook").unwrap().value == cb.to_matrix();
    let moved = ["tok.mlp.w1", "tok.mlp.w2"]
        .iter()
        .all(|n| trained.store.by_name(n).unwrap().value != init.store.by_name(n).unwrap().value);
    check(
        frozen && moved,
        format!(
            "{} steps; codebook unchanged: {frozen}, MLP moved: {moved}",
            log.len()
        ),
    )
}

fn causality() -> Outcome {
    let c = ModelConfig::desk();
    let p = params(&c, 1, true);
    let layout = build_layout(c.grid, c.scan);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for _ in 0..50 {
        let seq = random_seq(&mut rng, layout.len(), c.vocab_size);
        let class = rng.random_range(0..c.num_classes);
        let i = rng.random_range(0..layout.len() - 1);
        let mut other = seq.clone();
        other[i] = (other[i] + 1) % c.vocab_size as u32;
        let run = |s: &Vec<u32>| {
            let batch = ForwardBatch {
                layout: &layout,
                inputs: split_inputs(std::slice::from_ref(s)),
                classes: vec![class],
            };
            forward(&p, &batch, &mut ForwardOptions::eval()).unwrap()
        };
        let (a, b) = (run(&seq), run(&other));
        // Input token i is consumed at slot i + 1; slots 0..=i must not see it.
        if (0..=i).any(|s| a.row(s) != b.row(s)) {
            violations += 1;
        }
    }
    check(
        violations == 0,
        format!("{violations}/50 trials leaked future tokens"),
    )
}

fn kv_cache() -> Outcome {
    let mut worst: f64 = 0.0;
    for c in [
        ModelConfig::tiny(),
        ModelConfig {
            heads: 2,
            rope: RopeMode::FourD,
            ..ModelConfig::tiny()
        },
    ] {
        let p = params(&c, 4, true);
        let layout = build_layout(c.grid, c.scan);
        let dec = Decoder::new(&p, &layout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for class in [0, c.num_classes] {
            let seq = random_seq(&mut rng, layout.len(), c.vocab_size);
            let batch = ForwardBatch {
                layout: &layout,
                inputs: split_inputs(std::slice::from_ref(&seq)),
                classes: vec![class],
            };
            let full = forward(&p, &batch, &mut ForwardOptions::eval()).unwrap();
            let mut cache = dec.new_cache();
            for s in 0..layout.len() {
                let input = if s == 0 {
                    SlotInput::Class
                } else {
                    SlotInput::Token(seq[s - 1])
                };
                let step = dec.step(&mut cache, input, class).unwrap();
                for (a, b) in step.iter().zip(full.row(s)) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    check(
        worst < 1e-5,
        format!("max |incremental - full| = {worst:.2e} on 4x4 grids (2D and 4D)"),
    )
}

fn cfg_schedule() -> Outcome {
    let (total, s, alpha) = (256usize, 4.7, 0.88);
    let w0 = guidance_at(0, total, s, alpha);
    let want0 =
        1.0 + (s - 1.0) * (1.0 - (std::f64::consts::PI * (total as f64).powf(-alpha)).cos()) / 2.0;
    let last = guidance_at(total - 1, total, s, alpha);

    let c = ModelConfig::tiny();
    let p = params(&c, 6, true);
    let layout = build_layout(c.grid, c.scan);
    let dec = Decoder::new(&p, &layout).unwrap();
    let (mut cc, mut uc) = (dec.new_cache(), dec.new_cache());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let seq = random_seq(&mut rng, layout.len(), c.vocab_size);
    let mut identical = true;
    for t in 0..layout.len() {
        let input = if t == 0 {
            SlotInput::Class
        } else {
            SlotInput::Token(seq[t - 1])
        };
        let cond = dec.step(&mut cc, input, 1).unwrap();
        let uncond = dec.step(&mut uc, input, c.null_class()).unwrap();
        let guided = cfg_combine(&cond, &uncond, guidance_at(t, layout.len(), 1.0, alpha)).unwrap();
        identical &= guided == cond;
    }
    let cfg = SamplingConfig {
        class_label: 1,
        seed: 9,
        batch: 2,
        ..Default::default()
    };
    let drawn = sample(&p, &cfg).unwrap()
        == sample(
            &p,
            &SamplingConfig {
                scale_power: 0.3,
                ..cfg.clone()
            },
        )
        .unwrap();
    check(
        (w0 - want0).abs() < 1e-12 && last == s && identical && drawn,
        format!("w(0) = {w0:.9} (want {want0:.9}), w(T-1) = {last}, s=1 guided == conditional: {identical}"),
    )
}

fn desk_training() -> Outcome {
    let p = presets::desk();
    let spec_ok = p.dataset.shape.len() == 64
        && p.dataset.vocab_size == 64
        && p.dataset.num_classes == 8
        && p.dataset.noise_rate == 0.0;
    let data = generate_dataset(&p.dataset).unwrap();
    let t0 = Instant::now();
    let mut log = Vec::new();
    let trained =
        train_on(&p.model, &p.train, &data, &mut log, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let last = log.last().unwrap().loss;
    let mut correct = 0;
    for k in 0..p.model.num_classes {
        let cfg = SamplingConfig {
            class_label: k,
            argmax: true,
            ..Default::default()
        };
        let g = &sample(&trained, &cfg).unwrap()[0];
        let clean = p.dataset.clean_pattern(k);
        correct += g.tokens.iter().zip(&clean).filter(|(a, b)| a == b).count();
    }
    let acc = correct as f64 / (p.model.num_classes * p.model.grid.len()) as f64;
    let secs = t0.elapsed().as_secs_f64();
    let bound = 0.5 * 64f64.ln();
    check(
        spec_ok && log.len() <= 2000 && last < bound && acc >= 0.99 && secs <= 300.0,
        format!(
            "{} steps, final loss {last:.4} (< {bound:.4}), greedy accuracy {acc:.4}, {secs:.0}s",
            log.len()
        ),
    )
}

fn proxy_frechet() -> Outcome {
    let a = GaussianStats {
        mean: array![0.3, -1.0],
        cov: array![[2.0, 0.4], [0.4, 1.0]],
    };
    let same = frechet_gaussian(&a, &a).unwrap();
    let n01 = GaussianStats {
        mean: array![0.0],
        cov: array![[1.0]],
    };
    let n11 = GaussianStats {
        mean: array![1.0],
        cov: array![[1.0]],
    };
    let shifted = frechet_gaussian(&n01, &n11).unwrap();
    check(
        same.abs() < 1e-8 && (shifted - 1.0).abs() < 1e-6,
        format!("identical {same:.2e}, N(0,1) vs N(1,1) = {shifted:.9}"),
    )
}

fn ablation() -> Outcome {
    let p = presets::desk();
    let data = generate_dataset(&p.dataset).unwrap();
    let eval = EvalSettings {
        sample_count: 4,
        sampling: p.sample.clone(),
    };
    let threads = threads_from_env();
    let t0 = Instant::now();
    let report = ablate(&p.model, &p.train, &eval, &data, threads).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    eprint!("{}", report.table());
    let modules = report
        .rows
        .iter()
        .filter(|r| r.variant.table == AblationTable::Modules)
        .count();
    let adaln = report
        .rows
        .iter()
        .filter(|r| r.variant.table == AblationTable::Adaln)
        .count();
    let fp = data.fingerprint();
    let shared = report
        .rows
        .iter()
        .all(|r| r.seed == p.train.seed && r.dataset_fingerprint == fp);
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    check(
        modules == 8 && adaln == 3 && report.rows.len() == 11 && shared && failed == 0 && secs <= 1800.0,
        format!("{modules} + {adaln} rows, shared seed/data: {shared}, failed runs: {failed}, {:.1} min on {threads} thread(s)", secs / 60.0),
    )
}

fn dar(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_dar"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!(
            "dar {args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        ))
    }
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let mut logs = Vec::new();
    let mut manifests = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(format!("train_{run}"));
        dar(&[
            "train",
            "--preset",
            "tiny",
            "--seed",
            "11",
            "--out",
            &s(&out),
        ])?;
        logs.push(std::fs::read(out.join("loss.csv")).map_err(|e| e.to_string())?);
        // Both samplers read the first run's checkpoint so only `sample` is compared.
        let ckpt = dir.path().join("train_a").join("checkpoint.darck");
        let sout = dir.path().join(format!("sample_{run}"));
        dar(&[
            "sample",
            "--preset",
            "tiny",
            "--checkpoint",
            &s(&ckpt),
            "--class",
            "1",
            "--batch",
            "3",
            "--seed",
            "11",
            "--out",
            &s(&sout),
        ])?;
        manifests.push(std::fs::read(sout.join("manifest.json")).map_err(|e| e.to_string())?);
    }
    let ckpts: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|r| {
            std::fs::read(
                dir.path()
                    .join(format!("train_{r}"))
                    .join("checkpoint.darck"),
            )
            .unwrap()
        })
        .collect();
    check(
        logs[0] == logs[1] && manifests[0] == manifests[1] && ckpts[0] == ckpts[1],
        format!(
            "loss logs identical: {}, checkpoints identical: {}, manifests identical: {}",
            logs[0] == logs[1],
            ckpts[0] == ckpts[1],
            manifests[0] == manifests[1]
        ),
    )
}

fn hyperparameters() -> Outcome {
    let golden: BTreeMap<String, BTreeMap<String, Value>> =
        serde_json::from_str(include_str!("../../core/tests/golden/paper_presets.json"))
            .map_err(|e| e.to_string())?;
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (name, fields) in &golden {
        let preset = presets::by_name(name).map_err(|e| e.to_string())?;
        let v = serde_json::to_value(&preset).unwrap();
        for (pointer, want) in fields {
            compared += 1;
            if v.pointer(pointer) != Some(want) {
                mismatches.push(format!("{name}{pointer}"));
            }
        }
    }
    check(
        mismatches.is_empty() && golden.len() == 3,
        format!(
            "{compared} fields over {} presets, mismatches: {mismatches:?}",
            golden.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("scan correctness", scan_correctness),
        ("diagonal 3x3 enumeration", diagonal_3x3),
        ("rope properties", rope_properties),
        ("gradient check", gradient_check),
        ("frozen codebook", frozen_codebook),
        ("causality", causality),
        ("kv-cache equivalence", kv_cache),
        ("guidance schedule", cfg_schedule),
        ("desk training", desk_training),
        ("proxy-frechet", proxy_frechet),
        ("ablation harness", ablation),
        ("reproducibility", reproducibility),
        ("hyper-parameter fidelity", hyperparameters),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(d) => println!("criterion {:>2} {name}: PASS ({d})", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({d})", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
