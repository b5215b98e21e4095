use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{AdalnCondition, ModelConfig};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore};

pub const INIT_STD: f64 = 0.02;
pub const CODEBOOK_PARAM: &str = "tok.codebook";

#[derive(Debug, Clone, PartialEq)]
pub enum TokenEmbedIds {
    /// Frozen codebook followed by a trainable `D → H → H` MLP.
    Codebook {
        table: ParamId,
        w1: ParamId,
        b1: ParamId,
        w2: ParamId,
        b2: ParamId,
    },
    Table(ParamId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerIds {
    pub attn_norm: ParamId,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub ffn_norm: ParamId,
    pub w_gate: ParamId,
    pub w_up: ParamId,
    pub w_down: ParamId,
    /// `H × 4H` projection to `[shift_attn, scale_attn, shift_ffn, scale_ffn]`.
    pub ada_w: ParamId,
    pub ada_b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamIds {
    pub token: TokenEmbedIds,
    pub class_emb: ParamId,
    pub dir_emb: Option<ParamId>,
    pub time_emb: Option<ParamId>,
    pub layers: Vec<LayerIds>,
    pub final_norm: ParamId,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

/// All transformer weights. Matrices are stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub ids: ParamIds,
}

struct Init {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl Init {
    fn normal(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || self.normal.sample(&mut self.rng))
    }
}

impl ModelParams {
    /// Random initialization: `N(0, 0.02²)` weights and embeddings, unit
    /// norm gains, zero biases, and zero adaptive-norm projections.
    pub fn init(config: &ModelConfig, codebook: &Codebook, seed: u64) -> Result<Self> {
        config.validate()?;
        if codebook.k() != config.vocab_size || codebook.d() != config.code_dim {
            return Err(Error::Config(format!(
                "codebook is {}x{}, model expects K={} D={}",
                codebook.k(),
                codebook.d(),
                config.vocab_size,
                config.code_dim
            )));
        }
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal: Normal::new(0.0, INIT_STD).expect("valid std"),
        };
        let h = config.hidden_size;
        let k = config.vocab_size;
        let mut s = ParamStore::new();
        // The codebook is always stored so checkpoints can decode samples;
        // it is frozen either way.
        let table = s.insert(CODEBOOK_PARAM, codebook.to_matrix(), false, false)?;
        let token = if config.codebook_embeddings {
            let d = config.code_dim;
            TokenEmbedIds::Codebook {
                table,
                w1: s.insert("tok.mlp.w1", init.normal(d, h), true, true)?,
                b1: s.insert("tok.mlp.b1", Array2::zeros((1, h)), true, false)?,
                w2: s.insert("tok.mlp.w2", init.normal(h, h), true, true)?,
                b2: s.insert("tok.mlp.b2", Array2::zeros((1, h)), true, false)?,
            }
        } else {
            TokenEmbedIds::Table(s.insert("tok.table", init.normal(k, h), true, true)?)
        };
        let class_emb = s.insert(
            "cond.class",
            init.normal(config.num_classes + 1, h),
            true,
            true,
        )?;
        let dir_emb = match config.adaln_condition {
            AdalnCondition::ClassDirection => {
                Some(s.insert("cond.direction", init.normal(6, h), true, true)?)
            }
            _ => None,
        };
        let time_emb = match config.adaln_condition {
            AdalnCondition::ClassTimestep => Some(s.insert(
                "cond.timestep",
                init.normal(config.seq_len(), h),
                true,
                true,
            )?),
            _ => None,
        };
        let f = config.ffn_hidden;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = |n: &str| format!("layers.{l}.{n}");
            layers.push(LayerIds {
                attn_norm: s.insert(p("attn_norm"), Array2::ones((1, h)), true, false)?,
                wq: s.insert(p("attn.wq"), init.normal(h, h), true, true)?,
                wk: s.insert(p("attn.wk"), init.normal(h, h), true, true)?,
                wv: s.insert(p("attn.wv"), init.normal(h, h), true, true)?,
                wo: s.insert(p("attn.wo"), init.normal(h, h), true, true)?,
                ffn_norm: s.insert(p("ffn_norm"), Array2::ones((1, h)), true, false)?,
                w_gate: s.insert(p("ffn.w_gate"), init.normal(h, f), true, true)?,
                w_up: s.insert(p("ffn.w_up"), init.normal(h, f), true, true)?,
                w_down: s.insert(p("ffn.w_down"), init.normal(f, h), true, true)?,
                ada_w: s.insert(p("adaln.w"), Array2::zeros((h, 4 * h)), true, true)?,
                ada_b: s.insert(p("adaln.b"), Array2::zeros((1, 4 * h)), true, false)?,
            });
        }
        let final_norm = s.insert("final_norm", Array2::ones((1, h)), true, false)?;
        let head_w = s.insert("head.w", init.normal(h, k), true, true)?;
        let head_b = s.insert("head.b", Array2::zeros((1, k)), true, false)?;
        Ok(Self {
            config: config.clone(),
            store: s,
            ids: ParamIds {
                token,
                class_emb,
                dir_emb,
                time_emb,
                layers,
                final_norm,
                head_w,
                head_b,
            },
        })
    }

    /// Rebuild handles for a store whose names follow [`ModelParams::init`].
    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let table = store.id(CODEBOOK_PARAM)?;
        let token = if config.codebook_embeddings {
            TokenEmbedIds::Codebook {
                table,
                w1: store.id("tok.mlp.w1")?,
                b1: store.id("tok.mlp.b1")?,
                w2: store.id("tok.mlp.w2")?,
                b2: store.id("tok.mlp.b2")?,
            }
        } else {
            TokenEmbedIds::Table(store.id("tok.table")?)
        };
        let layers = (0..config.layers)
            .map(|l| {
                let id = |n: &str| store.id(&format!("layers.{l}.{n}"));
                Ok(LayerIds {
                    attn_norm: id("attn_norm")?,
                    wq: id("attn.wq")?,
                    wk: id("attn.wk")?,
                    wv: id("attn.wv")?,
                    wo: id("attn.wo")?,
                    ffn_norm: id("ffn_norm")?,
                    w_gate: id("ffn.w_gate")?,
                    w_up: id("ffn.w_up")?,
                    w_down: id("ffn.w_down")?,
                    ada_w: id("adaln.w")?,
                    ada_b: id("adaln.b")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ids = ParamIds {
            token,
            class_emb: store.id("cond.class")?,
            dir_emb: match config.adaln_condition {
                AdalnCondition::ClassDirection => Some(store.id("cond.direction")?),
                _ => None,
            },
            time_emb: match config.adaln_condition {
                AdalnCondition::ClassTimestep => Some(store.id("cond.timestep")?),
                _ => None,
            },
            layers,
            final_norm: store.id("final_norm")?,
            head_w: store.id("head.w")?,
            head_b: store.id("head.b")?,
        };
        let params = Self { config, store, ids };
        params.check_shapes()?;
        Ok(params)
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let (h, k, f) = (c.hidden_size, c.vocab_size, c.ffn_hidden);
        let mut expect: Vec<(ParamId, (usize, usize))> = vec![
            (self.ids.class_emb, (c.num_classes + 1, h)),
            (self.ids.final_norm, (1, h)),
            (self.ids.head_w, (h, k)),
            (self.ids.head_b, (1, k)),
        ];
        match &self.ids.token {
            TokenEmbedIds::Codebook {
                table,
                w1,
                b1,
                w2,
                b2,
            } => {
                expect.extend([
                    (*table, (k, c.code_dim)),
                    (*w1, (c.code_dim, h)),
                    (*b1, (1, h)),
                    (*w2, (h, h)),
                    (*b2, (1, h)),
                ]);
            }
            TokenEmbedIds::Table(t) => expect.push((*t, (k, h))),
        }
        if let Some(d) = self.ids.dir_emb {
            expect.push((d, (6, h)));
        }
        if let Some(t) = self.ids.time_emb {
            expect.push((t, (c.seq_len(), h)));
        }
        for l in &self.ids.layers {
            expect.extend([
                (l.attn_norm, (1, h)),
                (l.wq, (h, h)),
                (l.wk, (h, h)),
                (l.wv, (h, h)),
                (l.wo, (h, h)),
                (l.ffn_norm, (1, h)),
                (l.w_gate, (h, f)),
                (l.w_up, (h, f)),
                (l.w_down, (f, h)),
                (l.ada_w, (h, 4 * h)),
                (l.ada_b, (1, 4 * h)),
            ]);
        }
        for (id, shape) in expect {
            let p = self.store.get(id);
            if p.value.dim() != shape {
                return Err(Error::Shape(format!(
                    "parameter `{}` is {:?}, expected {:?}",
                    p.name,
                    p.value.shape(),
                    shape
                )));
            }
        }
        Ok(())
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.store.get(id).value
    }

    /// Parameters the model actually uses (the codebook counts only when it
    /// provides the token embeddings).
    pub fn param_count(&self) -> usize {
        let unused_codebook = match self.ids.token {
            TokenEmbedIds::Table(_) => self
                .store
                .by_name(CODEBOOK_PARAM)
                .map_or(0, |p| p.value.len()),
            TokenEmbedIds::Codebook { .. } => 0,
        };
        self.store.element_count() - unused_codebook
    }

    /// The tokenizer codebook stored alongside the weights.
    pub fn codebook(&self) -> Result<Codebook> {
        let m = &self
            .store
            .by_name(CODEBOOK_PARAM)
            .expect("always stored")
            .value;
        Codebook::from_codes(
            m.nrows(),
            m.ncols(),
            0,
            m.iter().map(|v| *v as f32).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::make_codebook;
    use crate::rope::RopeMode;

    #[test]
    fn analytic_count_matches_store() {
        for (codebook, cond) in [
            (true, AdalnCondition::ClassDirection),
            (false, AdalnCondition::Class),
            (true, AdalnCondition::ClassTimestep),
        ] {
            let mut c = ModelConfig::desk();
            c.codebook_embeddings = codebook;
            c.adaln_condition = cond;
            let cb = make_codebook(c.vocab_size, c.code_dim, 0).unwrap();
            let p = ModelParams::init(&c, &cb, 1).unwrap();
            assert_eq!(p.param_count(), c.param_count());
        }
    }

    #[test]
    fn init_is_seeded_and_adaln_zero() {
        let c = ModelConfig::desk();
        let cb = make_codebook(64, 8, 0).unwrap();
        let a = ModelParams::init(&c, &cb, 5).unwrap();
        let b = ModelParams::init(&c, &cb, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, ModelParams::init(&c, &cb, 6).unwrap());
        for l in &a.ids.layers {
            assert!(a.value(l.ada_w).iter().all(|v| *v == 0.0));
            assert!(a.value(l.ada_b).iter().all(|v| *v == 0.0));
        }
        assert!(a.value(a.ids.head_b).iter().all(|v| *v == 0.0));
        assert!(!a.store.by_name(CODEBOOK_PARAM).unwrap().trainable);
    }

    #[test]
    fn codebook_mismatch_rejected() {
        let c = ModelConfig::desk();
        let cb = make_codebook(32, 8, 0).unwrap();
        assert!(ModelParams::init(&c, &cb, 0).is_err());
        let mut c = ModelConfig::tiny();
        c.rope = RopeMode::FourD;
        let cb = make_codebook(16, 8, 0).unwrap();
        assert!(ModelParams::init(&c, &cb, 0).is_err());
    }

    #[test]
    fn from_store_round_trip() {
        let c = ModelConfig::tiny();
        let cb = make_codebook(16, 8, 0).unwrap();
        let p = ModelParams::init(&c, &cb, 2).unwrap();
        let q = ModelParams::from_store(c.clone(), p.store.clone()).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.codebook().unwrap().raw(), cb.raw());
    }
}
