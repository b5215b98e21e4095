use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Power-cosine guidance weight at 0-based step `t` of `total`:
/// `1 + (s - 1)·(1 - cos(π·((t + 1)/T)^α)) / 2`. Rises from near 1 at the
/// first step to exactly `s` at the last.
pub fn guidance_at(t: usize, total: usize, scale: f64, power: f64) -> f64 {
    debug_assert!(t < total);
    let u = ((t + 1) as f64 / total as f64).powf(power);
    if u >= 1.0 {
        return scale;
    }
    1.0 + (scale - 1.0) * (1.0 - (PI * u).cos()) / 2.0
}

/// `w·cond + (1 - w)·uncond`, i.e. `uncond + w·(cond - uncond)`. This form
/// returns `cond` exactly at `w = 1` and `uncond` exactly at `w = 0`.
pub fn cfg_combine(cond: &[f64], uncond: &[f64], w: f64) -> Result<Vec<f64>> {
    if cond.len() != uncond.len() {
        return Err(Error::Shape(format!(
            "conditional logits {} vs unconditional {}",
            cond.len(),
            uncond.len()
        )));
    }
    Ok(cond
        .iter()
        .zip(uncond)
        .map(|(c, u)| w * c + (1.0 - w) * u)
        .collect())
}
