//! Central finite-difference check of reverse-mode gradients.

use ndarray::Array2;
use serde::Serialize;

use super::graph::{Graph, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Denominator floor in `|a - n| / max(|a|, |n|, floor)`; keeps
    /// near-zero gradients from dominating the relative error.
    pub floor: f64,
    /// Check at most this many evenly spaced elements per input.
    pub max_elements_per_input: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            floor: 1e-4,
            max_elements_per_input: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// `(input, flat element)` of the largest relative error.
    pub worst: Option<(usize, usize)>,
}

fn eval<F>(f: &F, inputs: &[Array2<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.check_finite()?;
    let v = g.value(out);
    if v.dim() != (1, 1) {
        return Err(Error::Shape(format!(
            "grad_check needs a scalar function, got {:?}",
            v.shape()
        )));
    }
    Ok(v[[0, 0]])
}

/// Compare the analytic gradient of `f` at `inputs` with central
/// differences `(f(x+eps) - f(x-eps)) / (2 eps)`, element by element.
pub fn grad_check<F>(
    inputs: &[Array2<f64>],
    opts: GradCheckOptions,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(opts.eps > 0.0) {
        return Err(Error::Config(format!(
            "eps must be positive, got {}",
            opts.eps
        )));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.check_finite()?;
    let grads = g.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
        worst: None,
    };
    let mut point: Vec<Array2<f64>> = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let n = inputs[i].len();
        let analytic: Vec<f64> = grads
            .get(*v)
            .map(|a| a.iter().copied().collect())
            .unwrap_or_else(|| vec![0.0; n]);
        let original: Vec<f64> = inputs[i].iter().copied().collect();
        let stride = match opts.max_elements_per_input {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        for k in (0..n).step_by(stride) {
            let orig = original[k];
            set_flat(&mut point[i], k, orig + opts.eps);
            let up = eval(&f, &point)?;
            set_flat(&mut point[i], k, orig - opts.eps);
            let down = eval(&f, &point)?;
            set_flat(&mut point[i], k, orig);
            let numeric = (up - down) / (2.0 * opts.eps);
            let a = analytic[k];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(opts.floor);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst = Some((i, k));
            }
        }
    }
    Ok(report)
}

fn set_flat(a: &mut Array2<f64>, k: usize, v: f64) {
    let cols = a.ncols();
    a[[k / cols, k % cols]] = v;
}
