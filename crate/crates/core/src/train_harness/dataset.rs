//! Synthetic class-conditional token-grid corpora.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::TokenGrid;
use crate::error::{Error, Result};
use crate::grid_scan::GridShape;
use crate::io::{ByteReader, ByteWriter};
use crate::model::checkpoint::fingerprint_bytes;

pub const DATASET_MAGIC: &[u8; 6] = b"DARDS1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternFamily {
    Constant,
    Stripes,
    Checker,
    Gradient,
}

impl PatternFamily {
    /// Clean token of class `k` at row `i`, column `j`.
    pub fn token(self, k: usize, i: usize, j: usize, vocab: usize, num_classes: usize) -> u32 {
        let t = match self {
            PatternFamily::Constant => k,
            PatternFamily::Stripes => k + i,
            PatternFamily::Checker if (i + j).is_multiple_of(2) => k,
            PatternFamily::Checker => k + num_classes,
            PatternFamily::Gradient => k + i + j,
        };
        (t % vocab) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub shape: GridShape,
    pub vocab_size: usize,
    pub num_classes: usize,
    pub samples_per_class: usize,
    /// Probability that a cell is replaced by a uniform random token.
    pub noise_rate: f64,
    pub family: PatternFamily,
    pub seed: u64,
}

impl DatasetSpec {
    /// The corpus used by the desk presets: constant patterns, no noise.
    pub fn desk() -> Self {
        Self {
            shape: GridShape::new(8, 8).expect("non-empty"),
            vocab_size: 64,
            num_classes: 8,
            samples_per_class: 32,
            noise_rate: 0.0,
            family: PatternFamily::Constant,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.vocab_size > u16::MAX as usize + 1 {
            return Err(Error::Config(format!(
                "vocab_size must lie in [2, 65536], got {}",
                self.vocab_size
            )));
        }
        if self.num_classes == 0 || self.num_classes > u16::MAX as usize {
            return Err(Error::Config(format!(
                "num_classes must lie in [1, 65535], got {}",
                self.num_classes
            )));
        }
        if self.family == PatternFamily::Constant && self.num_classes > self.vocab_size {
            return Err(Error::Config(format!(
                "constant family needs num_classes ({}) <= vocab_size ({})",
                self.num_classes, self.vocab_size
            )));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples_per_class must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!(
                "noise_rate must lie in [0, 1), got {}",
                self.noise_rate
            )));
        }
        Ok(())
    }

    /// The noise-free grid of class `k`, row-major.
    pub fn clean_pattern(&self, k: usize) -> Vec<u32> {
        let (h, w) = (self.shape.h(), self.shape.w());
        (0..h)
            .flat_map(|i| (0..w).map(move |j| (i, j)))
            .map(|(i, j)| {
                self.family
                    .token(k, i, j, self.vocab_size, self.num_classes)
            })
            .collect()
    }
}

/// Samples stored class-major: all samples of class 0, then class 1, ...
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub shape: GridShape,
    pub vocab_size: usize,
    pub num_classes: usize,
    pub samples: Vec<TokenGrid>,
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    for k in 0..spec.num_classes {
        let clean = spec.clean_pattern(k);
        for _ in 0..spec.samples_per_class {
            let tokens = clean
                .iter()
                .map(|t| {
                    if spec.noise_rate > 0.0 && rng.random::<f64>() < spec.noise_rate {
                        rng.random_range(0..spec.vocab_size as u32)
                    } else {
                        *t
                    }
                })
                .collect();
            samples.push(TokenGrid::new(spec.shape, tokens, k as u32)?);
        }
    }
    Ok(Dataset {
        shape: spec.shape,
        vocab_size: spec.vocab_size,
        num_classes: spec.num_classes,
        samples,
    })
}

/// Train/held-out partition as sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Hold out the last tenth of each class (by index), at least one
    /// sample for classes with two or more.
    pub fn split(&self) -> Split {
        let mut per_class = vec![Vec::new(); self.num_classes];
        for (i, s) in self.samples.iter().enumerate() {
            per_class[s.class_label as usize].push(i);
        }
        let mut split = Split {
            train: Vec::new(),
            val: Vec::new(),
        };
        for idx in per_class {
            let n = idx.len();
            let held = if n >= 2 { (n / 10).max(1) } else { 0 };
            split.train.extend_from_slice(&idx[..n - held]);
            split.val.extend_from_slice(&idx[n - held..]);
        }
        split
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(DATASET_MAGIC);
        w.u32(self.shape.h() as u32);
        w.u32(self.shape.w() as u32);
        w.u32(self.vocab_size as u32);
        w.u32(self.num_classes as u32);
        w.u32(self.samples.len() as u32);
        for s in &self.samples {
            w.u16(s.class_label as u16);
            for t in &s.tokens {
                w.u16(*t as u16);
            }
        }
        let crc = crc32fast::hash(w.as_slice());
        w.u32(crc);
        w.into_inner()
    }

    pub fn from_bytes(data: &[u8], path: &Path) -> Result<Self> {
        let mut r = ByteReader::new(data, path);
        r.magic(DATASET_MAGIC)?;
        let h = r.u32()? as usize;
        let w = r.u32()? as usize;
        let vocab_size = r.u32()? as usize;
        let num_classes = r.u32()? as usize;
        let count = r.u32()? as usize;
        let shape = GridShape::new(h, w).map_err(|e| Error::format(path, e.to_string()))?;
        if vocab_size < 2 || num_classes == 0 {
            return Err(Error::format(
                path,
                format!("bad header K={vocab_size} classes={num_classes}"),
            ));
        }
        let body = 2 * (1 + h * w);
        if data.len() != r.pos() + count * body + 4 {
            return Err(Error::format(
                path,
                format!(
                    "{} bytes, expected {} for {count} samples",
                    data.len(),
                    r.pos() + count * body + 4
                ),
            ));
        }
        let mut samples = Vec::with_capacity(count);
        for i in 0..count {
            let class = r.u16()? as usize;
            let tokens = (0..h * w)
                .map(|_| r.u16().map(u32::from))
                .collect::<Result<Vec<_>>>()?;
            if class >= num_classes {
                return Err(Error::format(
                    path,
                    format!("sample {i}: class {class} of {num_classes}"),
                ));
            }
            if let Some(t) = tokens.iter().find(|t| **t as usize >= vocab_size) {
                return Err(Error::format(
                    path,
                    format!("sample {i}: token {t} with K={vocab_size}"),
                ));
            }
            samples.push(TokenGrid::new(shape, tokens, class as u32)?);
        }
        let expected = crc32fast::hash(&data[..r.pos()]);
        if r.u32()? != expected {
            return Err(Error::format(path, "checksum mismatch"));
        }
        r.finish()?;
        Ok(Self {
            shape,
            vocab_size,
            num_classes,
            samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data, path)
    }

    /// Content hash of the serialized corpus.
    pub fn fingerprint(&self) -> String {
        fingerprint_bytes(&self.to_bytes())
    }
}
