use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_scan::{GridShape, ScanKind};
use crate::rope::RopeMode;

/// What the adaptive norms are conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdalnCondition {
    Class,
    ClassTimestep,
    ClassDirection,
}

/// Transformer hyper-parameters. Serialized verbatim into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden_size: usize,
    pub heads: usize,
    /// SwiGLU inner width.
    pub ffn_hidden: usize,
    /// Vocabulary size K (codebook entries).
    pub vocab_size: usize,
    /// Codebook dimension D.
    pub code_dim: usize,
    pub num_classes: usize,
    pub grid: GridShape,
    pub scan: ScanKind,
    pub rope: RopeMode,
    pub codebook_embeddings: bool,
    pub adaln_condition: AdalnCondition,
    pub dropout: f64,
    pub attn_dropout: f64,
    pub class_dropout: f64,
}

/// SwiGLU width used by the presets: 3.5 × hidden.
pub fn default_ffn_hidden(hidden: usize) -> usize {
    hidden * 7 / 2
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.heads
    }

    /// Number of sequence slots: the class token plus `T - 1` image tokens.
    pub fn seq_len(&self) -> usize {
        self.grid.len()
    }

    /// Row of the class-embedding table used for the unconditional branch.
    pub fn null_class(&self) -> usize {
        self.num_classes
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("hidden_size", self.hidden_size),
            ("heads", self.heads),
            ("ffn_hidden", self.ffn_hidden),
            ("code_dim", self.code_dim),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be positive")));
            }
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("model.vocab_size must be at least 2".into()));
        }
        if !self.hidden_size.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model.hidden_size {} is not divisible by model.heads {}",
                self.hidden_size, self.heads
            )));
        }
        self.rope
            .check_head_dim(self.head_dim())
            .map_err(|e| Error::Config(format!("model.rope: {e}")))?;
        for (name, p) in [
            ("dropout", self.dropout),
            ("attn_dropout", self.attn_dropout),
            ("class_dropout", self.class_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "model.{name} must lie in [0, 1), got {p}"
                )));
            }
        }
        if self.vocab_size > u16::MAX as usize + 1 {
            return Err(Error::Config(
                "model.vocab_size exceeds the u16 token range".into(),
            ));
        }
        Ok(())
    }

    /// Parameter count (trainable plus the frozen codebook table when used)
    /// without allocating the model.
    pub fn param_count(&self) -> usize {
        let h = self.hidden_size;
        let k = self.vocab_size;
        let embed = if self.codebook_embeddings {
            k * self.code_dim + self.code_dim * h + h + h * h + h
        } else {
            k * h
        };
        let class = (self.num_classes + 1) * h;
        let cond = match self.adaln_condition {
            AdalnCondition::Class => 0,
            AdalnCondition::ClassTimestep => self.seq_len() * h,
            AdalnCondition::ClassDirection => 6 * h,
        };
        let per_layer = 4 * h * h + 3 * h * self.ffn_hidden + 2 * h + h * 4 * h + 4 * h;
        embed + class + cond + self.layers * per_layer + h + h * k + k
    }

    /// Two layers, hidden 16, four heads, K = 16 on a 4×4 grid.
    pub fn tiny() -> Self {
        Self {
            layers: 2,
            hidden_size: 16,
            heads: 4,
            ffn_hidden: default_ffn_hidden(16),
            vocab_size: 16,
            code_dim: 8,
            num_classes: 4,
            grid: GridShape::new(4, 4).expect("static shape"),
            scan: ScanKind::Diagonal,
            rope: RopeMode::TwoD,
            codebook_embeddings: true,
            adaln_condition: AdalnCondition::ClassDirection,
            dropout: 0.0,
            attn_dropout: 0.0,
            class_dropout: 0.0,
        }
    }

    /// Two layers, hidden 64, four heads, K = 64 on an 8×8 grid with every
    /// direction-aware module enabled.
    pub fn desk() -> Self {
        Self {
            layers: 2,
            hidden_size: 64,
            heads: 4,
            ffn_hidden: default_ffn_hidden(64),
            vocab_size: 64,
            code_dim: 8,
            num_classes: 8,
            grid: GridShape::new(8, 8).expect("static shape"),
            scan: ScanKind::Diagonal,
            rope: RopeMode::FourD,
            codebook_embeddings: true,
            adaln_condition: AdalnCondition::ClassDirection,
            dropout: 0.1,
            attn_dropout: 0.1,
            class_dropout: 0.1,
        }
    }

    fn paper(layers: usize, hidden: usize, heads: usize) -> Self {
        Self {
            layers,
            hidden_size: hidden,
            heads,
            ffn_hidden: default_ffn_hidden(hidden),
            vocab_size: 16_384,
            code_dim: 256,
            num_classes: 1000,
            grid: GridShape::new(16, 16).expect("static shape"),
            scan: ScanKind::Diagonal,
            rope: RopeMode::FourD,
            codebook_embeddings: true,
            adaln_condition: AdalnCondition::ClassDirection,
            dropout: 0.1,
            attn_dropout: 0.1,
            class_dropout: 0.1,
        }
    }

    pub fn paper_b() -> Self {
        Self::paper(24, 1024, 16)
    }

    pub fn paper_l() -> Self {
        Self::paper(36, 1280, 20)
    }

    pub fn paper_xl() -> Self {
        Self::paper(48, 1536, 24)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for c in [
            ModelConfig::tiny(),
            ModelConfig::desk(),
            ModelConfig::paper_b(),
            ModelConfig::paper_l(),
            ModelConfig::paper_xl(),
        ] {
            c.validate().unwrap();
        }
        assert_eq!(ModelConfig::paper_b().head_dim(), 64);
    }

    #[test]
    fn paper_sizes_within_five_percent() {
        for (c, reported) in [
            (ModelConfig::paper_b(), 485e6),
            (ModelConfig::paper_l(), 1117e6),
            (ModelConfig::paper_xl(), 2077e6),
        ] {
            let n = c.param_count() as f64;
            assert!((n / reported - 1.0).abs() < 0.05, "{} vs {reported}", n);
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::desk();
        c.heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny();
        c.rope = RopeMode::FourD;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = serde_json::to_value(ModelConfig::desk()).unwrap();
        v["bogus"] = 1.into();
        assert!(serde_json::from_value::<ModelConfig>(v).is_err());
    }
}
