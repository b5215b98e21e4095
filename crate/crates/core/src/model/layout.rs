use serde::Serialize;

use crate::grid_scan::{DirectionLabel, GridShape, Position2D, ScanKind, ScanOrder};
use crate::rope::Position4D;

/// Off-grid position of the class token.
pub const CLASS_TOKEN_POS: Position2D = Position2D::new(-1, -1);

/// Per-slot positions and direction labels for one grid and scan order.
///
/// Slot 0 holds the class token; slot `s >= 1` holds image token `s - 1`
/// of the scan, so the last image token is never an input. Slot `s`
/// predicts image token `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceLayout {
    #[serde(skip)]
    pub order: ScanOrder,
    pub positions: Vec<Position4D>,
    pub directions: Vec<DirectionLabel>,
}

impl SequenceLayout {
    pub fn new(order: ScanOrder) -> Self {
        let n = order.len();
        let mut positions = Vec::with_capacity(n);
        let mut directions = Vec::with_capacity(n);
        positions.push(Position4D::new(CLASS_TOKEN_POS, order.positions[0]));
        directions.push(DirectionLabel::Start);
        for s in 1..n {
            positions.push(Position4D::new(order.positions[s - 1], order.positions[s]));
            directions.push(order.directions[s - 1]);
        }
        Self {
            order,
            positions,
            directions,
        }
    }

    /// Slot count; equals the number of prediction targets.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.len()
    }

    pub fn target_len(&self) -> usize {
        self.order.len()
    }

    pub fn shape(&self) -> GridShape {
        self.order.shape
    }
}

pub fn build_layout(shape: GridShape, scan: ScanKind) -> SequenceLayout {
    SequenceLayout::new(scan.order(shape))
}
