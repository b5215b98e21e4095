//! Direction-aware diagonal autoregressive generation over 2D token grids.
//!
//! Image tokens are generated along a zigzag over anti-diagonals. Each
//! token's rotary embedding covers both its own cell and the next cell to be
//! generated. Adaptive norms are conditioned on class plus step-direction
//! embeddings, and token embeddings come from a frozen VQ codebook.

// `!(x > 0.0)` style checks are deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codebook;
pub mod error;
pub mod grid_scan;
mod io;
pub mod model;
pub mod numerics;
pub mod presets;
pub mod rope;
pub mod sampler;
pub mod train_harness;

pub use error::{Error, Result};
