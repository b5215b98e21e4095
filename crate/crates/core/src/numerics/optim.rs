//! AdamW with global-norm gradient clipping and decoupled weight decay.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Max global gradient norm; `None` disables clipping.
    pub clip: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.96,
            eps: 1e-8,
            weight_decay: 0.05,
            clip: Some(1.0),
        }
    }
}

/// First/second moments per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<_> = store.iter().map(|p| Array2::zeros(p.value.dim())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// Global L2 norm over the present gradients, accumulated in `f64`.
pub fn global_norm(grads: &[Option<Array2<f64>>]) -> f64 {
    grads
        .iter()
        .flatten()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Scale gradients in place so their global norm is at most `max_norm`;
/// returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Option<Array2<f64>>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            *g *= s;
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub grad_norm: f64,
}

/// One AdamW update. `grads[i]` pairs with the i-th parameter of `store`;
/// frozen parameters and missing gradients are left alone (missing
/// gradients still receive weight decay, as with a zero gradient).
pub fn adamw_step(
    store: &mut ParamStore,
    mut grads: Vec<Option<Array2<f64>>>,
    state: &mut OptimizerState,
    hyper: &AdamWConfig,
    lr: f64,
) -> Result<StepInfo> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::Shape(format!(
            "{} parameters, {} gradients, {} moment slots",
            store.len(),
            grads.len(),
            state.m.len()
        )));
    }
    // Zero is legal: warmup starts there.
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be finite and non-negative, got {lr}"
        )));
    }
    for (p, g) in store.iter().zip(&grads) {
        if let Some(g) = g {
            if g.dim() != p.value.dim() {
                return Err(Error::Shape(format!(
                    "gradient {:?} for parameter `{}` {:?}",
                    g.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
        }
    }
    for (p, g) in store.iter().zip(grads.iter_mut()) {
        if !p.trainable {
            *g = None;
        }
    }
    let grad_norm = match hyper.clip {
        Some(c) => clip_global_norm(&mut grads, c),
        None => global_norm(&grads),
    };

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for (i, (p, g)) in store.iter_mut().zip(grads).enumerate() {
        if !p.trainable {
            continue;
        }
        if p.decay && hyper.weight_decay != 0.0 {
            p.value *= 1.0 - lr * hyper.weight_decay;
        }
        let Some(g) = g else { continue };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        ndarray::Zip::from(&mut p.value)
            .and(m)
            .and(v)
            .and(&g)
            .for_each(|w, m, v, &g| {
                *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
                *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *w -= lr * mh / (vh.sqrt() + hyper.eps);
            });
    }
    Ok(StepInfo { grad_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn store(v: Array2<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", v, true, true).unwrap();
        s
    }

    #[test]
    fn zero_gradient_is_pure_decay() {
        let mut s = store(array![[1.0, -2.0, 4.0]]);
        let mut st = OptimizerState::new(&s);
        let hyper = AdamWConfig::default();
        adamw_step(
            &mut s,
            vec![Some(Array2::zeros((1, 3)))],
            &mut st,
            &hyper,
            1e-2,
        )
        .unwrap();
        let expect = array![[1.0, -2.0, 4.0]] * (1.0 - 1e-2 * 0.05);
        assert_eq!(s.by_name("w").unwrap().value, expect);
    }

    #[test]
    fn clipping_scales_to_unit_norm() {
        let mut g = vec![Some(array![[6.0, 8.0]])];
        let n = clip_global_norm(&mut g, 1.0);
        assert_eq!(n, 10.0);
        for (a, b) in g[0].as_ref().unwrap().iter().zip([0.6, 0.8]) {
            assert!((a - b).abs() < 1e-15);
        }
        let before = g.clone();
        clip_global_norm(&mut g, 1.0);
        for (a, b) in g[0]
            .as_ref()
            .unwrap()
            .iter()
            .zip(before[0].as_ref().unwrap())
        {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn frozen_parameters_untouched() {
        let mut s = ParamStore::new();
        s.insert("frozen", array![[1.0, 2.0]], false, true).unwrap();
        s.insert("w", array![[1.0, 2.0]], true, true).unwrap();
        let mut st = OptimizerState::new(&s);
        let g = vec![Some(array![[1.0, 1.0]]), Some(array![[1.0, 1.0]])];
        adamw_step(&mut s, g, &mut st, &AdamWConfig::default(), 0.1).unwrap();
        assert_eq!(s.by_name("frozen").unwrap().value, array![[1.0, 2.0]]);
        assert_ne!(s.by_name("w").unwrap().value, array![[1.0, 2.0]]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut s = store(array![[1.0, 2.0]]);
        let mut st = OptimizerState::new(&s);
        let r = adamw_step(
            &mut s,
            vec![Some(array![[1.0]])],
            &mut st,
            &AdamWConfig::default(),
            0.1,
        );
        assert!(matches!(r, Err(Error::Shape(_))));
        assert!(adamw_step(&mut s, vec![], &mut st, &AdamWConfig::default(), 0.1).is_err());
    }

    /// Scalar quadratic `(w - 3)²`: simulate the optimizer and check it lands
    /// near the minimizer with monotone loss once past the first steps.
    #[test]
    fn scalar_quadratic_converges() {
        let mut s = store(array![[0.0]]);
        let mut st = OptimizerState::new(&s);
        let hyper = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let loss = |w: f64| (w - 3.0) * (w - 3.0);
        let mut losses = Vec::new();
        for k in 0..1000 {
            let w = s.by_name("w").unwrap().value[[0, 0]];
            losses.push(loss(w));
            let lr = 0.05 * (1.0 - k as f64 / 1000.0) + 1e-4;
            adamw_step(
                &mut s,
                vec![Some(array![[2.0 * (w - 3.0)]])],
                &mut st,
                &hyper,
                lr,
            )
            .unwrap();
        }
        let w = s.by_name("w").unwrap().value[[0, 0]];
        assert!((w - 3.0).abs() < 1e-2, "w = {w}");
        for pair in losses[..40].windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }
}
