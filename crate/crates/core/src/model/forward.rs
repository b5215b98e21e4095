//! Differentiable forward pass over a batch of sequences sharing one layout.

use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::AdalnCondition;
use super::layout::SequenceLayout;
use super::params::{ModelParams, TokenEmbedIds};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, Var};
use crate::rope::{rotation_table, RotationTable};

/// Inputs for one forward pass. Every sequence uses the same layout.
#[derive(Debug, Clone)]
pub struct ForwardBatch<'a> {
    pub layout: &'a SequenceLayout,
    /// Per sequence, the first `T - 1` image tokens in scan order.
    pub inputs: Vec<Vec<u32>>,
    /// Per sequence, the class-embedding row (the null row for
    /// unconditional passes).
    pub classes: Vec<usize>,
}

impl ForwardBatch<'_> {
    pub fn batch(&self) -> usize {
        self.inputs.len()
    }
}

/// Normalized activations before the learned gain, reported per block.
pub struct Probe<'a> {
    pub layer: usize,
    pub site: &'static str,
    pub normed: &'a Array2<f64>,
}

#[derive(Default)]
pub struct ForwardOptions<'a> {
    /// Training mode: dropout masks are drawn from this generator.
    pub rng: Option<&'a mut ChaCha8Rng>,
    /// Skip the adaptive-norm modulation entirely (testing hook).
    pub disable_adaln: bool,
    pub probe: Option<&'a mut dyn FnMut(Probe<'_>)>,
}

impl<'a> ForwardOptions<'a> {
    pub fn eval() -> Self {
        Self::default()
    }

    pub fn train(rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            rng: Some(rng),
            ..Self::default()
        }
    }
}

/// Rotation table for the layout's slots under the model's rope mode.
pub fn layout_rotation(params: &ModelParams, layout: &SequenceLayout) -> Result<RotationTable> {
    rotation_table(
        &layout.positions,
        params.config.head_dim(),
        params.config.rope,
    )
}

/// Row of the direction or timestep table used by `slot`, if any.
pub fn condition_rows(params: &ModelParams, layout: &SequenceLayout, slot: usize) -> Option<usize> {
    match params.config.adaln_condition {
        AdalnCondition::Class => None,
        AdalnCondition::ClassDirection => Some(layout.directions[slot].index()),
        AdalnCondition::ClassTimestep => Some(slot),
    }
}

fn dropout(g: &mut Graph, x: Var, p: f64, rng: &mut Option<&mut ChaCha8Rng>) -> Result<Var> {
    let Some(rng) = rng.as_deref_mut() else {
        return Ok(x);
    };
    if p == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - p);
    let mask =
        Array2::from_shape_simple_fn(
            g.shape(x),
            || if rng.random::<f64>() < p { 0.0 } else { keep },
        );
    g.dropout(x, mask)
}

struct Ctx<'o, 'a> {
    vars: &'o [Var],
    opts: &'o mut ForwardOptions<'a>,
}

impl Ctx<'_, '_> {
    fn v(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    fn probe(&mut self, g: &Graph, layer: usize, site: &'static str, normed: Var) {
        if let Some(p) = self.opts.probe.as_mut() {
            p(Probe {
                layer,
                site,
                normed: g.value(normed),
            });
        }
    }
}

/// Build the forward pass on `g` and return logits of shape
/// `(batch · T) × K`; row `b·T + s` predicts image token `s` of sequence `b`.
/// `vars[i]` must hold the i-th parameter of `params.store`.
pub fn forward_graph(
    g: &mut Graph,
    params: &ModelParams,
    vars: &[Var],
    batch: &ForwardBatch<'_>,
    opts: &mut ForwardOptions<'_>,
) -> Result<Var> {
    let c = &params.config;
    let layout = batch.layout;
    let (h, heads, dh) = (c.hidden_size, c.heads, c.head_dim());
    let l = layout.len();
    let b = batch.batch();
    if vars.len() != params.store.len() {
        return Err(Error::Shape(format!(
            "{} vars for {} parameters",
            vars.len(),
            params.store.len()
        )));
    }
    if layout.shape() != c.grid {
        return Err(Error::Config(format!(
            "layout grid {} vs model grid {}",
            layout.shape(),
            c.grid
        )));
    }
    if layout.order.kind != c.scan {
        return Err(Error::Config(format!(
            "layout scan {} vs model scan {}",
            layout.order.kind, c.scan
        )));
    }
    if batch.classes.len() != b || b == 0 {
        return Err(Error::Shape(format!(
            "{} input rows, {} class labels",
            b,
            batch.classes.len()
        )));
    }
    for seq in &batch.inputs {
        if seq.len() != l - 1 {
            return Err(Error::Shape(format!(
                "sequence of {} tokens, expected {}",
                seq.len(),
                l - 1
            )));
        }
        if let Some(t) = seq.iter().find(|t| **t as usize >= c.vocab_size) {
            return Err(Error::Index(format!("token {t} with K={}", c.vocab_size)));
        }
    }
    if let Some(k) = batch.classes.iter().find(|k| **k > c.num_classes) {
        return Err(Error::Index(format!(
            "class {k} with {} classes",
            c.num_classes
        )));
    }

    let mut cx = Ctx { vars, opts };
    let ids = &params.ids;

    // Token embeddings for all image inputs, then interleave with class rows.
    let class_rows = g.gather(cx.v(ids.class_emb), &batch.classes)?;
    let mut x = if l > 1 {
        let tokens: Vec<usize> = batch.inputs.iter().flatten().map(|t| *t as usize).collect();
        let tok = match &ids.token {
            TokenEmbedIds::Table(t) => g.gather(cx.v(*t), &tokens)?,
            TokenEmbedIds::Codebook {
                table,
                w1,
                b1,
                w2,
                b2,
            } => {
                let e = g.gather(cx.v(*table), &tokens)?;
                let e = g.matmul(e, cx.v(*w1))?;
                let e = g.add_row(e, cx.v(*b1))?;
                let e = g.silu(e);
                let e = g.matmul(e, cx.v(*w2))?;
                g.add_row(e, cx.v(*b2))?
            }
        };
        let stacked = g.assemble(b * l, h, &[(class_rows, 0, 0), (tok, b, 0)])?;
        let perm: Vec<usize> = (0..b)
            .flat_map(|i| std::iter::once(i).chain((0..l - 1).map(move |s| b + i * (l - 1) + s)))
            .collect();
        g.gather(stacked, &perm)?
    } else {
        class_rows
    };
    x = dropout(g, x, c.dropout, &mut cx.opts.rng)?;

    // Per-slot condition, shared across layers.
    let slot_classes: Vec<usize> = batch
        .classes
        .iter()
        .flat_map(|k| std::iter::repeat_n(*k, l))
        .collect();
    let mut cond = g.gather(cx.v(ids.class_emb), &slot_classes)?;
    let extra_table = ids.dir_emb.or(ids.time_emb);
    if let Some(table) = extra_table {
        let rows: Vec<usize> = (0..b)
            .flat_map(|_| (0..l).map(|s| condition_rows(params, layout, s).expect("table present")))
            .collect();
        let e = g.gather(cx.v(table), &rows)?;
        cond = g.add(cond, e)?;
    }
    let cond = g.silu(cond);

    let rot = Rc::new(layout_rotation(params, layout)?);
    let inv_sqrt = 1.0 / (dh as f64).sqrt();

    for (li, lid) in ids.layers.iter().enumerate() {
        let modulation = if cx.opts.disable_adaln {
            None
        } else {
            let m = g.matmul(cond, cx.v(lid.ada_w))?;
            Some(g.add_row(m, cx.v(lid.ada_b))?)
        };
        let modulate = |g: &mut Graph, hn: Var, sub: usize| -> Result<Var> {
            let Some(m) = modulation else { return Ok(hn) };
            let shift = g.slice(m, 0, 2 * sub * h, b * l, h)?;
            let scale = g.slice(m, 0, (2 * sub + 1) * h, b * l, h)?;
            let hs = g.mul(hn, scale)?;
            let y = g.add(hn, hs)?;
            g.add(y, shift)
        };

        // Attention.
        let hn = g.rmsnorm(x);
        cx.probe(g, li, "attn", hn);
        let hn = g.mul_row(hn, cx.v(lid.attn_norm))?;
        let hn = modulate(g, hn, 0)?;
        let q = g.matmul(hn, cx.v(lid.wq))?;
        let k = g.matmul(hn, cx.v(lid.wk))?;
        let v = g.matmul(hn, cx.v(lid.wv))?;
        let q = g.rope(q, rot.clone())?;
        let k = g.rope(k, rot.clone())?;
        let mut parts = Vec::with_capacity(b * heads);
        for bi in 0..b {
            for hd in 0..heads {
                let (r0, c0) = (bi * l, hd * dh);
                let qh = g.slice(q, r0, c0, l, dh)?;
                let kh = g.slice(k, r0, c0, l, dh)?;
                let vh = g.slice(v, r0, c0, l, dh)?;
                let s = g.matmul_nt(qh, kh)?;
                let s = g.scale(s, inv_sqrt);
                let p = g.softmax(s, true)?;
                let p = dropout(g, p, c.attn_dropout, &mut cx.opts.rng)?;
                parts.push((g.matmul(p, vh)?, r0, c0));
            }
        }
        let o = g.assemble(b * l, h, &parts)?;
        let o = g.matmul(o, cx.v(lid.wo))?;
        let o = dropout(g, o, c.dropout, &mut cx.opts.rng)?;
        x = g.add(x, o)?;

        // Feed-forward.
        let hn = g.rmsnorm(x);
        cx.probe(g, li, "ffn", hn);
        let hn = g.mul_row(hn, cx.v(lid.ffn_norm))?;
        let hn = modulate(g, hn, 1)?;
        let a = g.matmul(hn, cx.v(lid.w_gate))?;
        let u = g.matmul(hn, cx.v(lid.w_up))?;
        let f = g.swiglu(a, u)?;
        let f = g.matmul(f, cx.v(lid.w_down))?;
        let f = dropout(g, f, c.dropout, &mut cx.opts.rng)?;
        x = g.add(x, f)?;
    }

    let xn = g.rmsnorm(x);
    let xn = g.mul_row(xn, cx.v(ids.final_norm))?;
    let logits = g.matmul(xn, cx.v(ids.head_w))?;
    let logits = g.add_row(logits, cx.v(ids.head_b))?;
    g.check_finite()?;
    Ok(logits)
}

/// Evaluation-mode logits without recording gradients.
pub fn forward(
    params: &ModelParams,
    batch: &ForwardBatch<'_>,
    opts: &mut ForwardOptions<'_>,
) -> Result<Array2<f64>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = params
        .store
        .iter()
        .map(|p| g.constant(p.value.clone()))
        .collect();
    let out = forward_graph(&mut g, params, &vars, batch, opts)?;
    Ok(g.value(out).clone())
}

/// Mean next-token cross-entropy. `targets[b]` is the full scan-ordered
/// token sequence of sequence `b`.
pub fn nll_loss(g: &mut Graph, logits: Var, targets: &[Vec<u32>]) -> Result<Var> {
    let flat: Vec<usize> = targets.iter().flatten().map(|t| *t as usize).collect();
    g.cross_entropy(logits, &flat)
}

/// Inputs and targets for grids given in scan order: inputs drop the last
/// token.
pub fn split_inputs(sequences: &[Vec<u32>]) -> Vec<Vec<u32>> {
    sequences
        .iter()
        .map(|s| s[..s.len() - 1].to_vec())
        .collect()
}
