//! Fréchet distance between Gaussian fits of feature sets.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Mean and covariance of a feature distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
}

impl GaussianStats {
    /// Maximum-likelihood fit (covariance divides by n) to the rows of
    /// `features`.
    pub fn fit(features: ArrayView2<f64>) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::Shape("cannot fit a Gaussian to zero samples".into()));
        }
        let mean = features.mean_axis(Axis(0)).expect("non-empty");
        let centered = &features - &mean;
        let cov = centered.t().dot(&centered) / n as f64;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

const SYMMETRY_TOL: f64 = 1e-8;

fn to_sym(a: &Array2<f64>, which: &str) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!(
            "{which} covariance is {:?}, not square",
            a.shape()
        )));
    }
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (a[[i, j]] - a[[j, i]]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Shape(format!(
                    "{which} covariance is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]])))
}

/// Symmetric PSD square root, clamping negative eigenvalues to zero.
fn sqrt_psd(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2(Σa Σb)^{1/2})`, never negative.
///
/// The trace of the cross term uses `Σa^{1/2} Σb Σa^{1/2}`, which is
/// symmetric and shares its spectrum with `Σa Σb`.
pub fn frechet_gaussian(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    let d = a.dim();
    if b.dim() != d || a.cov.nrows() != d || b.cov.nrows() != d {
        return Err(Error::Shape(format!(
            "dimension mismatch: means {} vs {}, covariances {:?} vs {:?}",
            d,
            b.dim(),
            a.cov.shape(),
            b.cov.shape()
        )));
    }
    let sa = to_sym(&a.cov, "first")?;
    let sb = to_sym(&b.cov, "second")?;
    let mean_term: f64 = (&a.mean - &b.mean).mapv(|v| v * v).sum();
    let root_a = sqrt_psd(sa.clone());
    let cross = &root_a * &sb * &root_a;
    let cross = 0.5 * (&cross + cross.transpose());
    let tr_cross: f64 = SymmetricEigen::new(cross)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let score = mean_term + sa.trace() + sb.trace() - 2.0 * tr_cross;
    if !score.is_finite() {
        return Err(Error::NonFinite("Fréchet score".into()));
    }
    Ok(score.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_d(mu: f64, var: f64) -> GaussianStats {
        GaussianStats {
            mean: array![mu],
            cov: array![[var]],
        }
    }

    #[test]
    fn closed_forms_in_one_dimension() {
        assert!(
            (frechet_gaussian(&one_d(0.0, 1.0), &one_d(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-12
        );
        assert!(
            (frechet_gaussian(&one_d(0.0, 1.0), &one_d(0.0, 4.0)).unwrap() - 1.0).abs() < 1e-12
        );
        // (3 - 0)² + (√9 - √1)² = 9 + 4
        assert!(
            (frechet_gaussian(&one_d(3.0, 9.0), &one_d(0.0, 1.0)).unwrap() - 13.0).abs() < 1e-12
        );
    }

    #[test]
    fn identical_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xa = Array::from_shape_simple_fn((50, 5), || rng.random::<f64>());
        let xb = Array::from_shape_simple_fn((40, 5), || rng.random::<f64>() * 2.0);
        let a = GaussianStats::fit(xa.view()).unwrap();
        let b = GaussianStats::fit(xb.view()).unwrap();
        assert!(frechet_gaussian(&a, &a).unwrap() < 1e-8);
        let ab = frechet_gaussian(&a, &b).unwrap();
        let ba = frechet_gaussian(&b, &a).unwrap();
        assert!(ab > 0.1);
        assert!((ab - ba).abs() < 1e-8);
    }

    #[test]
    fn commuting_diagonal_covariances() {
        let a = GaussianStats {
            mean: array![0.0, 0.0],
            cov: array![[4.0, 0.0], [0.0, 1.0]],
        };
        let b = GaussianStats {
            mean: array![1.0, 1.0],
            cov: array![[1.0, 0.0], [0.0, 9.0]],
        };
        // 2 + (2-1)² + (1-3)²
        assert!((frechet_gaussian(&a, &b).unwrap() - 7.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = one_d(0.0, 1.0);
        let b = GaussianStats {
            mean: array![0.0, 0.0],
            cov: array![[1.0, 0.5], [0.0, 1.0]],
        };
        assert!(frechet_gaussian(&a, &b).is_err());
        assert!(frechet_gaussian(&b, &b).is_err());
    }
}
