//! Finite-difference check of the full model loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::forward::{forward_graph, nll_loss, split_inputs, ForwardBatch, ForwardOptions};
use super::layout::build_layout;
use super::params::{ModelParams, INIT_STD};
use crate::codebook::make_codebook;
use crate::error::Result;
use crate::numerics::{grad_check, GradCheckOptions, GradCheckReport, Var};

/// Check d(loss)/d(every trainable parameter) on a random batch of
/// `batch` sequences, in evaluation mode. The zero-initialized adaptive-norm
/// projections are re-drawn from the weight init so the conditioning
/// paths carry non-zero gradients.
pub fn model_grad_check(
    config: &ModelConfig,
    seed: u64,
    batch: usize,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let codebook = make_codebook(config.vocab_size, config.code_dim, seed)?;
    let mut params = ModelParams::init(config, &codebook, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    for l in params.ids.layers.clone() {
        for id in [l.ada_w, l.ada_b] {
            params
                .store
                .get_mut(id)
                .value
                .mapv_inplace(|_| normal.sample(&mut rng));
        }
    }
    let layout = build_layout(config.grid, config.scan);
    let seqs: Vec<Vec<u32>> = (0..batch)
        .map(|_| {
            (0..layout.len())
                .map(|_| rng.random_range(0..config.vocab_size as u32))
                .collect()
        })
        .collect();
    // Exercise the null row too.
    let classes: Vec<usize> = (0..batch)
        .map(|_| rng.random_range(0..=config.num_classes))
        .collect();

    let trainable: Vec<usize> = params
        .store
        .iter()
        .enumerate()
        .filter(|(_, p)| p.trainable)
        .map(|(i, _)| i)
        .collect();
    let inputs: Vec<_> = trainable
        .iter()
        .map(|i| params.store.iter().nth(*i).expect("index").value.clone())
        .collect();
    grad_check(&inputs, opts, |g, xs| {
        let mut it = xs.iter();
        let vars: Vec<Var> = params
            .store
            .iter()
            .map(|p| {
                if p.trainable {
                    *it.next().expect("one var per trainable")
                } else {
                    g.constant(p.value.clone())
                }
            })
            .collect();
        let fb = ForwardBatch {
            layout: &layout,
            inputs: split_inputs(&seqs),
            classes: classes.clone(),
        };
        let logits = forward_graph(g, &params, &vars, &fb, &mut ForwardOptions::eval())?;
        nll_loss(g, logits, &seqs)
    })
}
