//! Incremental single-stream decoding with per-layer key/value caches.

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::model::forward::{condition_rows, layout_rotation};
use crate::model::{ModelParams, SequenceLayout, TokenEmbedIds};
use crate::numerics::graph::RMS_EPS;
use crate::rope::RotationTable;

/// Keys and values of every consumed slot, per layer. Append-only.
#[derive(Debug, Clone, Default)]
pub struct KvCache {
    keys: Vec<Vec<Array1<f64>>>,
    values: Vec<Vec<Array1<f64>>>,
}

impl KvCache {
    pub fn new(layers: usize) -> Self {
        Self {
            keys: vec![Vec::new(); layers],
            values: vec![Vec::new(); layers],
        }
    }

    /// Number of slots consumed so far.
    pub fn len(&self) -> usize {
        self.keys.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// What enters a slot: the class token or an image token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotInput {
    Class,
    Token(u32),
}

/// Read-only decoder for one layout; streams keep their own [`KvCache`].
pub struct Decoder<'p> {
    params: &'p ModelParams,
    layout: &'p SequenceLayout,
    rot: RotationTable,
}

fn rmsnorm(x: &Array1<f64>, gain: ArrayView1<f64>) -> Array1<f64> {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / (ms + RMS_EPS).sqrt();
    x.mapv(|v| v * inv) * gain
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

impl<'p> Decoder<'p> {
    pub fn new(params: &'p ModelParams, layout: &'p SequenceLayout) -> Result<Self> {
        let c = &params.config;
        if layout.shape() != c.grid || layout.order.kind != c.scan {
            return Err(Error::Config(format!(
                "layout {} {} does not match model {} {}",
                layout.order.kind,
                layout.shape(),
                c.scan,
                c.grid
            )));
        }
        Ok(Self {
            params,
            layout,
            rot: layout_rotation(params, layout)?,
        })
    }

    pub fn new_cache(&self) -> KvCache {
        KvCache::new(self.params.config.layers)
    }

    fn row(&self, id: crate::numerics::ParamId) -> ArrayView1<'_, f64> {
        self.params.value(id).row(0)
    }

    fn embed(&self, input: SlotInput, class: usize) -> Result<Array1<f64>> {
        let p = self.params;
        match input {
            SlotInput::Class => Ok(p.value(p.ids.class_emb).row(class).to_owned()),
            SlotInput::Token(t) => {
                if t as usize >= p.config.vocab_size {
                    return Err(Error::Index(format!(
                        "token {t} with K={}",
                        p.config.vocab_size
                    )));
                }
                Ok(match &p.ids.token {
                    TokenEmbedIds::Table(id) => p.value(*id).row(t as usize).to_owned(),
                    TokenEmbedIds::Codebook {
                        table,
                        w1,
                        b1,
                        w2,
                        b2,
                    } => {
                        let e = p.value(*table).row(t as usize);
                        let hdn = (e.dot(p.value(*w1)) + self.row(*b1)).mapv(silu);
                        hdn.dot(p.value(*w2)) + self.row(*b2)
                    }
                })
            }
        }
    }

    /// Consume slot `cache.len()` and return its next-token logits.
    pub fn step(&self, cache: &mut KvCache, input: SlotInput, class: usize) -> Result<Vec<f64>> {
        let p = self.params;
        let c = &p.config;
        let slot = cache.len();
        if slot >= self.layout.len() {
            return Err(Error::Index(format!(
                "slot {slot} past sequence length {}",
                self.layout.len()
            )));
        }
        if (slot == 0) != (input == SlotInput::Class) {
            return Err(Error::Config(format!(
                "slot {slot} cannot take input {input:?}"
            )));
        }
        if class > c.num_classes {
            return Err(Error::Index(format!(
                "class {class} with {} classes",
                c.num_classes
            )));
        }
        let (h, dh) = (c.hidden_size, c.head_dim());
        let mut x = self.embed(input, class)?;
        let mut cond = p.value(p.ids.class_emb).row(class).to_owned();
        if let (Some(table), Some(r)) = (
            p.ids.dir_emb.or(p.ids.time_emb),
            condition_rows(p, self.layout, slot),
        ) {
            cond += &p.value(table).row(r);
        }
        let cond = cond.mapv(silu);
        let inv_sqrt = 1.0 / (dh as f64).sqrt();

        for (li, lid) in p.ids.layers.iter().enumerate() {
            let m = cond.dot(p.value(lid.ada_w)) + self.row(lid.ada_b);
            let modulate = |hn: Array1<f64>, sub: usize| {
                let shift = m.slice(s![2 * sub * h..(2 * sub + 1) * h]);
                let scale = m.slice(s![(2 * sub + 1) * h..(2 * sub + 2) * h]);
                &hn + &(&hn * &scale) + shift
            };

            let hn = modulate(rmsnorm(&x, self.row(lid.attn_norm)), 0);
            let mut q = hn.dot(p.value(lid.wq));
            let mut k = hn.dot(p.value(lid.wk));
            let v = hn.dot(p.value(lid.wv));
            for chunk in q.as_slice_mut().expect("contiguous").chunks_mut(dh) {
                self.rot.rotate_in_place(slot, chunk, false);
            }
            for chunk in k.as_slice_mut().expect("contiguous").chunks_mut(dh) {
                self.rot.rotate_in_place(slot, chunk, false);
            }
            cache.keys[li].push(k);
            cache.values[li].push(v);
            let keys = &cache.keys[li];
            let values = &cache.values[li];
            let mut o = Array1::zeros(h);
            for hd in 0..c.heads {
                let span = s![hd * dh..(hd + 1) * dh];
                let qh = q.slice(span);
                let scores: Vec<f64> = keys
                    .iter()
                    .map(|kj| qh.dot(&kj.slice(span)) * inv_sqrt)
                    .collect();
                let mut probs = vec![0.0; scores.len()];
                crate::numerics::graph::softmax_into(&scores, &mut probs);
                let mut oh = o.slice_mut(span);
                for (pj, vj) in probs.iter().zip(values) {
                    oh.scaled_add(*pj, &vj.slice(span));
                }
            }
            x += &o.dot(p.value(lid.wo));

            let hn = modulate(rmsnorm(&x, self.row(lid.ffn_norm)), 1);
            let a = hn.dot(p.value(lid.w_gate));
            let u = hn.dot(p.value(lid.w_up));
            let f: Array1<f64> = a.iter().zip(u.iter()).map(|(a, u)| silu(*a) * u).collect();
            x += &f.dot(p.value(lid.w_down));
        }

        let xn = rmsnorm(&x, self.row(p.ids.final_norm));
        let logits = xn.dot(p.value(p.ids.head_w)) + self.row(p.ids.head_b);
        if !logits.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("logits at slot {slot}")));
        }
        Ok(logits.to_vec())
    }

    /// Teacher-forced logits for every slot of one sequence, computed
    /// incrementally. `inputs` are the first `T - 1` scan-ordered tokens.
    pub fn teacher_forced(&self, inputs: &[u32], class: usize) -> Result<Array2<f64>> {
        let l = self.layout.len();
        if inputs.len() + 1 != l {
            return Err(Error::Shape(format!(
                "{} inputs for {l} slots",
                inputs.len()
            )));
        }
        let mut cache = self.new_cache();
        let mut out = Array2::zeros((l, self.params.config.vocab_size));
        for slot in 0..l {
            let input = if slot == 0 {
                SlotInput::Class
            } else {
                SlotInput::Token(inputs[slot - 1])
            };
            let logits = self.step(&mut cache, input, class)?;
            out.row_mut(slot).assign(&ArrayView1::from(&logits));
        }
        Ok(out)
    }
}
