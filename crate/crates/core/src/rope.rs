//! Rotary position embeddings over 2D and 4D token coordinates.
//!
//! Query/key rows of width `head_dim` are read as `head_dim / 2` complex
//! numbers `(v[2j], v[2j+1])` and multiplied by a per-token table of unit
//! rotations. In 2D mode the slots alternate `(x, y)` of the token's own
//! cell; in 4D mode they cycle `(x_cur, y_cur, x_nxt, y_nxt)`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_scan::Position2D;

const BASE: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RopeMode {
    TwoD,
    FourD,
}

impl RopeMode {
    /// Number of coordinates sharing one frequency.
    fn coords(self) -> usize {
        match self {
            RopeMode::TwoD => 2,
            RopeMode::FourD => 4,
        }
    }

    pub fn check_head_dim(self, head_dim: usize) -> Result<()> {
        let div = 2 * self.coords();
        if head_dim == 0 || !head_dim.is_multiple_of(div) {
            return Err(Error::Config(format!(
                "{self:?} rope needs head_dim divisible by {div}, got {head_dim}"
            )));
        }
        Ok(())
    }
}

/// A token's own cell and the cell generated after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Position4D {
    pub cur: Position2D,
    pub nxt: Position2D,
}

impl Position4D {
    pub const fn new(cur: Position2D, nxt: Position2D) -> Self {
        Self { cur, nxt }
    }
}

/// `theta_t = 10000^(-t / (head_dim / (2·coords)))` for the exclusive range
/// `t < head_dim / (2·coords)`.
pub fn frequencies(head_dim: usize, mode: RopeMode) -> Result<Vec<f64>> {
    mode.check_head_dim(head_dim)?;
    let n = head_dim / (2 * mode.coords());
    Ok((0..n).map(|t| BASE.powf(-(t as f64) / n as f64)).collect())
}

/// Unit-modulus rotation factors, one row per token, `head_dim / 2` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationTable {
    rows: usize,
    head_dim: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RotationTable {
    fn from_angles(rows: usize, head_dim: usize, angles: Vec<f64>) -> Self {
        debug_assert_eq!(angles.len(), rows * head_dim / 2);
        Self {
            rows,
            head_dim,
            cos: angles.iter().map(|a| a.cos()).collect(),
            sin: angles.iter().map(|a| a.sin()).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn slots(&self) -> usize {
        self.head_dim / 2
    }

    /// Complex factor `(re, im)` at token `n`, slot `j`.
    pub fn entry(&self, n: usize, j: usize) -> (f64, f64) {
        let k = n * self.slots() + j;
        (self.cos[k], self.sin[k])
    }

    /// Keep only rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> RotationTable {
        let s = self.slots();
        RotationTable {
            rows: end - start,
            head_dim: self.head_dim,
            cos: self.cos[start * s..end * s].to_vec(),
            sin: self.sin[start * s..end * s].to_vec(),
        }
    }

    /// Rotate one `head_dim`-wide chunk in place with row `n` of the table.
    /// `conjugate` applies the inverse rotation.
    pub fn rotate_in_place(&self, n: usize, chunk: &mut [f64], conjugate: bool) {
        let s = self.slots();
        let sign = if conjugate { -1.0 } else { 1.0 };
        for j in 0..s {
            let (c, sn) = (self.cos[n * s + j], sign * self.sin[n * s + j]);
            let (a, b) = (chunk[2 * j], chunk[2 * j + 1]);
            chunk[2 * j] = a * c - b * sn;
            chunk[2 * j + 1] = a * sn + b * c;
        }
    }

    /// Rotate every `head_dim` chunk of each row of `x` (all heads share the
    /// table). Row `r` of `x` uses table row `r % rows`, so batches of
    /// stacked sequences reuse one table.
    pub fn rotate_heads(&self, x: &Array2<f64>, conjugate: bool) -> Result<Array2<f64>> {
        if !x.ncols().is_multiple_of(self.head_dim) {
            return Err(Error::Shape(format!(
                "row width {} is not a multiple of head_dim {}",
                x.ncols(),
                self.head_dim
            )));
        }
        if !x.nrows().is_multiple_of(self.rows) {
            return Err(Error::Shape(format!(
                "{} rows cannot tile a {}-row rotation table",
                x.nrows(),
                self.rows
            )));
        }
        let mut out = x.as_standard_layout().into_owned();
        for (r, mut row) in out.rows_mut().into_iter().enumerate() {
            let row = row.as_slice_mut().expect("standard layout");
            for chunk in row.chunks_mut(self.head_dim) {
                self.rotate_in_place(r % self.rows, chunk, conjugate);
            }
        }
        Ok(out)
    }
}

/// `R(n, 2t) = e^{iθ_t x_n}`, `R(n, 2t+1) = e^{iθ_t y_n}`.
pub fn rotation_table_2d(positions: &[Position2D], head_dim: usize) -> Result<RotationTable> {
    let theta = frequencies(head_dim, RopeMode::TwoD)?;
    let mut angles = Vec::with_capacity(positions.len() * head_dim / 2);
    for p in positions {
        for t in &theta {
            angles.push(t * p.x as f64);
            angles.push(t * p.y as f64);
        }
    }
    Ok(RotationTable::from_angles(
        positions.len(),
        head_dim,
        angles,
    ))
}

/// `R(n, 4t..4t+3) = e^{iθ_t (x_cur, y_cur, x_nxt, y_nxt)}`.
pub fn rotation_table_4d(positions: &[Position4D], head_dim: usize) -> Result<RotationTable> {
    let theta = frequencies(head_dim, RopeMode::FourD)?;
    let mut angles = Vec::with_capacity(positions.len() * head_dim / 2);
    for p in positions {
        for t in &theta {
            angles.push(t * p.cur.x as f64);
            angles.push(t * p.cur.y as f64);
            angles.push(t * p.nxt.x as f64);
            angles.push(t * p.nxt.y as f64);
        }
    }
    Ok(RotationTable::from_angles(
        positions.len(),
        head_dim,
        angles,
    ))
}

/// Build the table for `mode`; 2D mode ignores `nxt`.
pub fn rotation_table(
    positions: &[Position4D],
    head_dim: usize,
    mode: RopeMode,
) -> Result<RotationTable> {
    match mode {
        RopeMode::TwoD => {
            let cur: Vec<_> = positions.iter().map(|p| p.cur).collect();
            rotation_table_2d(&cur, head_dim)
        }
        RopeMode::FourD => rotation_table_4d(positions, head_dim),
    }
}

/// Multiply per-token vectors (one row per table row, width `head_dim`) by
/// the table.
pub fn apply_rotation(vectors: ArrayView2<f64>, table: &RotationTable) -> Result<Array2<f64>> {
    if vectors.ncols() != table.head_dim() {
        return Err(Error::Shape(format!(
            "vector width {} does not match head_dim {}",
            vectors.ncols(),
            table.head_dim()
        )));
    }
    if vectors.nrows() != table.rows() {
        return Err(Error::Shape(format!(
            "{} vectors for a {}-row table",
            vectors.nrows(),
            table.rows()
        )));
    }
    table.rotate_heads(&vectors.to_owned(), false)
}
