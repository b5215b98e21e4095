//! Synthetic vector-quantized tokenizer: a seeded codebook, nearest-code
//! quantization, decoding, and PPM rendering.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_scan::GridShape;
use crate::io::{ByteReader, ByteWriter};

pub const CODEBOOK_MAGIC: &[u8; 6] = b"DARCB1";
/// Magic, K, D, seed.
pub const CODEBOOK_HEADER_LEN: usize = 6 + 4 + 4 + 8;

/// `K × D` code vectors, stored as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    d: usize,
    seed: u64,
    codes: Vec<f32>,
}

impl Codebook {
    pub fn from_codes(k: usize, d: usize, seed: u64, codes: Vec<f32>) -> Result<Self> {
        if k < 2 || d < 1 {
            return Err(Error::Config(format!(
                "codebook needs K >= 2 and D >= 1, got K={k}, D={d}"
            )));
        }
        if codes.len() != k * d {
            return Err(Error::Shape(format!(
                "{} code values for K={k}, D={d}",
                codes.len()
            )));
        }
        if let Some(bad) = codes.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("codebook value {bad}")));
        }
        let cb = Self { k, d, seed, codes };
        for i in 0..k {
            for j in 0..i {
                if cb.code(i) == cb.code(j) {
                    return Err(Error::Config(format!("codes {j} and {i} are identical")));
                }
            }
        }
        Ok(cb)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn code(&self, i: usize) -> &[f32] {
        &self.codes[i * self.d..(i + 1) * self.d]
    }

    pub fn raw(&self) -> &[f32] {
        &self.codes
    }

    /// The codes as a `K × D` matrix, used as the frozen embedding table.
    pub fn to_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.k, self.d), |(i, j)| self.codes[i * self.d + j] as f64)
    }

    /// Index of the nearest code by squared distance; lowest index wins ties.
    pub fn nearest(&self, v: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.k {
            let d2: f64 = self
                .code(i)
                .iter()
                .zip(v)
                .map(|(c, x)| (*c as f64 - x).powi(2))
                .sum();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best.0
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = ByteWriter::new();
        w.bytes(CODEBOOK_MAGIC);
        w.u32(self.k as u32);
        w.u32(self.d as u32);
        w.u64(self.seed);
        let start = w.len();
        for c in &self.codes {
            w.f32(*c);
        }
        let crc = crc32fast::hash(&w.as_slice()[start..]);
        w.u32(crc);
        w.write_to(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = ByteReader::new(&bytes, path);
        r.magic(CODEBOOK_MAGIC)?;
        let k = r.u32()? as usize;
        let d = r.u32()? as usize;
        let seed = r.u64()?;
        let start = r.pos();
        let codes = (0..k * d).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        let end = r.pos();
        let crc = r.u32()?;
        r.finish()?;
        if crc32fast::hash(&bytes[start..end]) != crc {
            return Err(Error::format(path, "checksum mismatch"));
        }
        Codebook::from_codes(k, d, seed, codes)
    }
}

/// Seeded standard-normal codes (unit variance per component).
pub fn make_codebook(k: usize, d: usize, seed: u64) -> Result<Codebook> {
    if k < 2 || d < 1 {
        return Err(Error::Config(format!(
            "codebook needs K >= 2 and D >= 1, got K={k}, D={d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codes = (0..k * d)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            x as f32
        })
        .collect();
    Codebook::from_codes(k, d, seed, codes)
}

/// A grid of code indices with its class label. Tokens are row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGrid {
    pub shape: GridShape,
    pub tokens: Vec<u32>,
    pub class_label: u32,
}

impl TokenGrid {
    pub fn new(shape: GridShape, tokens: Vec<u32>, class_label: u32) -> Result<Self> {
        if tokens.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} tokens for a {shape} grid",
                tokens.len()
            )));
        }
        Ok(Self {
            shape,
            tokens,
            class_label,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.tokens[x * self.shape.w() + y]
    }
}

/// Map each cell of an `h × w × D` feature map to its nearest code.
pub fn quantize(features: ArrayView3<f64>, cb: &Codebook, class_label: u32) -> Result<TokenGrid> {
    let (h, w, d) = features.dim();
    if d != cb.d() {
        return Err(Error::Shape(format!(
            "feature dim {d} vs codebook D {}",
            cb.d()
        )));
    }
    let shape = GridShape::new(h, w)?;
    let mut tokens = Vec::with_capacity(h * w);
    for x in 0..h {
        for y in 0..w {
            let v: Vec<f64> = (0..d).map(|c| features[[x, y, c]]).collect();
            tokens.push(cb.nearest(&v) as u32);
        }
    }
    TokenGrid::new(shape, tokens, class_label)
}

/// Replace every token by its code vector.
pub fn decode(grid: &TokenGrid, cb: &Codebook) -> Result<Array3<f64>> {
    if let Some(bad) = grid.tokens.iter().find(|t| **t as usize >= cb.k()) {
        return Err(Error::Index(format!("token {bad} with K={}", cb.k())));
    }
    let (h, w) = (grid.shape.h(), grid.shape.w());
    Ok(Array3::from_shape_fn((h, w, cb.d()), |(x, y, c)| {
        cb.code(grid.get(x, y) as usize)[c] as f64
    }))
}

/// 8-bit RGB image from the first three feature channels (channel `c % D`
/// when `D < 3`), each cell drawn as a `scale × scale` block. Values are
/// mapped affinely so `[-3, 3]` spans `[0, 255]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn render(features: ArrayView3<f64>, scale: usize) -> RgbImage {
    let (h, w, d) = features.dim();
    let (height, width) = (h * scale, w * scale);
    let mut pixels = Vec::with_capacity(width * height * 3);
    for py in 0..height {
        for px in 0..width {
            for c in 0..3 {
                let v = features[[py / scale, px / scale, c % d]];
                pixels.push((127.5 + 42.5 * v).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RgbImage {
        width,
        height,
        pixels,
    }
}

impl RgbImage {
    /// Binary PPM (`P6`, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}
