//! Raster and diagonal (zigzag) scan orders over an `h × w` token grid.
//!
//! A [`ScanOrder`] is a permutation of the grid cells together with the
//! direction label of every step `p_n -> p_{n+1}`. The diagonal order walks
//! anti-diagonals `x + y = d` in increasing `d`, alternating between the
//! up-right and down-left patterns, so every step stays within one king move.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid dimensions in tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawShape", into = "RawShape")]
pub struct GridShape {
    h: usize,
    w: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShape {
    h: usize,
    w: usize,
}

impl TryFrom<RawShape> for GridShape {
    type Error = Error;
    fn try_from(raw: RawShape) -> Result<Self> {
        GridShape::new(raw.h, raw.w)
    }
}

impl From<GridShape> for RawShape {
    fn from(s: GridShape) -> Self {
        RawShape { h: s.h, w: s.w }
    }
}

impl GridShape {
    pub fn new(h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::Config(format!(
                "grid shape must be at least 1x1, got {h}x{w}"
            )));
        }
        Ok(Self { h, w })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    /// Token count `T = h·w`.
    pub fn len(&self) -> usize {
        self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, p: Position2D) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.h && (p.y as usize) < self.w
    }

    /// Row-major index of an in-grid cell.
    pub fn raster_index(&self, p: Position2D) -> usize {
        debug_assert!(self.contains(p));
        p.x as usize * self.w + p.y as usize
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.h, self.w)
    }
}

/// Cell coordinate: `x` is the row, `y` the column. Signed so that the
/// class-token sentinel `(-1, -1)` is representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position2D {
    pub x: i32,
    pub y: i32,
}

impl Position2D {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Position2D) -> f64 {
        let dx = (other.x - self.x) as f64;
        let dy = (other.y - self.y) as f64;
        dx.hypot(dy)
    }
}

/// Generation direction of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DirectionLabel {
    Right,
    Down,
    UpRight,
    DownLeft,
    LineBreak,
    /// Reserved for the class-token slot.
    Start,
}

impl DirectionLabel {
    pub const ALL: [DirectionLabel; 6] = [
        DirectionLabel::Right,
        DirectionLabel::Down,
        DirectionLabel::UpRight,
        DirectionLabel::DownLeft,
        DirectionLabel::LineBreak,
        DirectionLabel::Start,
    ];

    /// Row of this label in the direction-embedding table.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Label of a unit step in the diagonal vocabulary, if it is one.
    pub fn from_diagonal_delta(dx: i32, dy: i32) -> Option<Self> {
        match (dx, dy) {
            (0, 1) => Some(DirectionLabel::Right),
            (1, 0) => Some(DirectionLabel::Down),
            (-1, 1) => Some(DirectionLabel::UpRight),
            (1, -1) => Some(DirectionLabel::DownLeft),
            _ => None,
        }
    }
}

/// Which traversal produced a [`ScanOrder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanKind {
    Raster,
    Diagonal,
}

impl ScanKind {
    /// Label for the step `from -> to` under this order's vocabulary.
    pub fn label(self, from: Position2D, to: Position2D) -> Option<DirectionLabel> {
        let (dx, dy) = (to.x - from.x, to.y - from.y);
        match self {
            ScanKind::Raster if (dx, dy) == (0, 1) => Some(DirectionLabel::Right),
            ScanKind::Raster => Some(DirectionLabel::LineBreak),
            ScanKind::Diagonal => DirectionLabel::from_diagonal_delta(dx, dy),
        }
    }

    pub fn order(self, shape: GridShape) -> ScanOrder {
        match self {
            ScanKind::Raster => raster_order(shape),
            ScanKind::Diagonal => diagonal_order(shape),
        }
    }
}

impl fmt::Display for ScanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanKind::Raster => "raster",
            ScanKind::Diagonal => "diagonal",
        })
    }
}

impl FromStr for ScanKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raster" => Ok(ScanKind::Raster),
            "diagonal" => Ok(ScanKind::Diagonal),
            other => Err(Error::Config(format!("unknown scan order `{other}`"))),
        }
    }
}

/// A traversal of every grid cell plus the direction of each step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanOrder {
    pub shape: GridShape,
    pub kind: ScanKind,
    pub positions: Vec<Position2D>,
    /// `directions[n]` labels the step `positions[n] -> positions[n + 1]`.
    pub directions: Vec<DirectionLabel>,
}

impl ScanOrder {
    fn from_positions(shape: GridShape, kind: ScanKind, positions: Vec<Position2D>) -> Self {
        let directions = positions
            .windows(2)
            .map(|w| {
                kind.label(w[0], w[1])
                    .expect("scan construction only emits unit steps")
            })
            .collect();
        Self {
            shape,
            kind,
            positions,
            directions,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Grid cell (row-major index) → sequence index.
    pub fn inverse_permutation(&self) -> Vec<usize> {
        let mut inverse = vec![usize::MAX; self.shape.len()];
        for (n, p) in self.positions.iter().enumerate() {
            inverse[self.shape.raster_index(*p)] = n;
        }
        inverse
    }

    /// Reorder a row-major grid of values into sequence order.
    pub fn gather<T: Copy>(&self, raster: &[T]) -> Vec<T> {
        self.positions
            .iter()
            .map(|p| raster[self.shape.raster_index(*p)])
            .collect()
    }

    /// Inverse of [`ScanOrder::gather`].
    pub fn scatter<T: Copy + Default>(&self, sequence: &[T]) -> Vec<T> {
        let mut raster = vec![T::default(); self.shape.len()];
        for (p, v) in self.positions.iter().zip(sequence) {
            raster[self.shape.raster_index(*p)] = *v;
        }
        raster
    }

    pub fn adjacency_stats(&self) -> Result<AdjacencyStats> {
        if self.len() < 2 {
            return Err(Error::Config(format!(
                "adjacency stats need at least two tokens, grid is {}",
                self.shape
            )));
        }
        let dists: Vec<f64> = self
            .positions
            .windows(2)
            .map(|w| w[0].dist(&w[1]))
            .collect();
        let max_step_dist = dists.iter().copied().fold(0.0, f64::max);
        let mean_step_dist = dists.iter().sum::<f64>() / dists.len() as f64;
        let mut direction_histogram = BTreeMap::new();
        for d in &self.directions {
            *direction_histogram.entry(*d).or_insert(0) += 1;
        }
        Ok(AdjacencyStats {
            max_step_dist,
            mean_step_dist,
            direction_histogram,
        })
    }
}

/// Step-distance summary of a scan order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjacencyStats {
    pub max_step_dist: f64,
    pub mean_step_dist: f64,
    pub direction_histogram: BTreeMap<DirectionLabel, usize>,
}

pub fn raster_order(shape: GridShape) -> ScanOrder {
    let positions = (0..shape.h)
        .flat_map(|x| (0..shape.w).map(move |y| Position2D::new(x as i32, y as i32)))
        .collect();
    ScanOrder::from_positions(shape, ScanKind::Raster, positions)
}

/// Zigzag over anti-diagonals starting at the top-left corner.
///
/// Odd diagonals run up-right (row descending), even diagonals run
/// down-left. With this parity the step between diagonals is Right-else-Down
/// after an up-right run and Down-else-Right after a down-left run.
pub fn diagonal_order(shape: GridShape) -> ScanOrder {
    let (h, w) = (shape.h as i32, shape.w as i32);
    let mut positions = Vec::with_capacity(shape.len());
    for d in 0..(h + w - 1) {
        let lo = (d - (w - 1)).max(0);
        let hi = d.min(h - 1);
        if d % 2 == 1 {
            positions.extend((lo..=hi).rev().map(|x| Position2D::new(x, d - x)));
        } else {
            positions.extend((lo..=hi).map(|x| Position2D::new(x, d - x)));
        }
    }
    ScanOrder::from_positions(shape, ScanKind::Diagonal, positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use DirectionLabel::*;

    fn p(x: i32, y: i32) -> Position2D {
        Position2D::new(x, y)
    }

    fn shape(h: usize, w: usize) -> GridShape {
        GridShape::new(h, w).unwrap()
    }

    #[test]
    fn raster_2x2() {
        let o = raster_order(shape(2, 2));
        assert_eq!(o.positions, vec![p(0, 0), p(0, 1), p(1, 0), p(1, 1)]);
        assert_eq!(o.directions, vec![Right, LineBreak, Right]);
    }

    #[test]
    fn raster_single_row_is_all_right() {
        let o = raster_order(shape(1, 4));
        assert!(o.directions.iter().all(|d| *d == Right));
        assert_eq!(raster_order(shape(3, 3)).positions[5], p(1, 2));
    }

    #[test]
    fn diagonal_small_grids() {
        let o = diagonal_order(shape(2, 2));
        assert_eq!(o.positions, vec![p(0, 0), p(1, 0), p(0, 1), p(1, 1)]);
        assert_eq!(o.directions, vec![Down, UpRight, Down]);

        let o = diagonal_order(shape(3, 3));
        assert_eq!(
            o.positions,
            vec![
                p(0, 0),
                p(1, 0),
                p(0, 1),
                p(0, 2),
                p(1, 1),
                p(2, 0),
                p(2, 1),
                p(1, 2),
                p(2, 2)
            ]
        );
        assert_eq!(
            o.directions,
            vec![Down, UpRight, Right, DownLeft, DownLeft, Right, UpRight, Down]
        );

        let o = diagonal_order(shape(1, 1));
        assert_eq!(o.positions, vec![p(0, 0)]);
        assert!(o.directions.is_empty());
    }

    #[test]
    fn inverse_permutation_examples() {
        let r = raster_order(shape(2, 2));
        assert_eq!(
            r.inverse_permutation()[shape(2, 2).raster_index(p(1, 0))],
            2
        );
        let d = diagonal_order(shape(3, 3));
        assert_eq!(
            d.inverse_permutation()[shape(3, 3).raster_index(p(2, 0))],
            5
        );
    }

    #[test]
    fn gather_scatter_round_trip() {
        let s = shape(3, 5);
        let o = diagonal_order(s);
        let raster: Vec<u32> = (0..15).collect();
        assert_eq!(o.scatter(&o.gather(&raster)), raster);
    }

    #[test]
    fn stats_need_two_tokens() {
        assert!(diagonal_order(shape(1, 1)).adjacency_stats().is_err());
    }

    #[test]
    fn stats_16x16() {
        let r = raster_order(shape(16, 16)).adjacency_stats().unwrap();
        assert!((r.max_step_dist - (15.0f64 * 15.0 + 1.0).sqrt()).abs() < 1e-12);
        let d = diagonal_order(shape(16, 16)).adjacency_stats().unwrap();
        assert!((d.max_step_dist - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn diagonal_3x3_histogram() {
        let s = diagonal_order(shape(3, 3)).adjacency_stats().unwrap();
        let expected: BTreeMap<_, _> = [(Right, 2), (Down, 2), (UpRight, 2), (DownLeft, 2)].into();
        assert_eq!(s.direction_histogram, expected);
    }

    #[test]
    fn zero_shape_rejected() {
        assert!(GridShape::new(0, 3).is_err());
        assert!(serde_json::from_str::<GridShape>(r#"{"h":0,"w":1}"#).is_err());
    }

    #[test]
    fn exhaustive_shapes_up_to_32() {
        for h in 1..=32 {
            for w in 1..=32 {
                let s = shape(h, w);
                for o in [raster_order(s), diagonal_order(s)] {
                    let mut seen = vec![false; s.len()];
                    for q in &o.positions {
                        let i = s.raster_index(*q);
                        assert!(!seen[i]);
                        seen[i] = true;
                    }
                    assert!(seen.iter().all(|v| *v));
                    let relabeled: Vec<_> = o
                        .positions
                        .windows(2)
                        .map(|w| o.kind.label(w[0], w[1]).unwrap())
                        .collect();
                    assert_eq!(relabeled, o.directions);
                }
                let d = diagonal_order(s);
                for pair in d.positions.windows(2) {
                    assert!(pair[0].dist(&pair[1]) <= 2f64.sqrt() + 1e-12);
                }
                assert!(d
                    .directions
                    .iter()
                    .all(|l| matches!(l, Right | Down | UpRight | DownLeft)));
                assert_eq!(d.positions[0], p(0, 0));
                // With w == 2 the line break (x, 1) -> (x + 1, 0) is exactly √2.
                if h >= 2 && w >= 3 {
                    let r = raster_order(s).adjacency_stats().unwrap();
                    assert!(r.max_step_dist > 2f64.sqrt());
                }
            }
        }
    }
}
