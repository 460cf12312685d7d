//! Gaussian-process regression with a squared-exponential kernel, and the
//! expected-improvement acquisition for minimization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Median pairwise Euclidean distance; 1 when every point coincides.
pub fn median_heuristic(points: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(sq_dist(&points[i], &points[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d[d.len() / 2];
    if m > 1e-12 {
        m
    } else {
        1.0
    }
}

/// Zero-mean GP over standardized targets (optionally residuals from a prior
/// mean supplied by the caller).
#[derive(Clone, Debug)]
pub struct GaussianProcess {
    xs: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    length_scale: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    /// Diagonal noise actually used (after any jitter escalation).
    pub noise: f64,
}

impl GaussianProcess {
    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        (-sq_dist(a, b) / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    /// Fits to `(xs, ys)` with observation noise `noise` (in standardized
    /// units). If the kernel matrix is numerically singular the noise is
    /// raised tenfold until it factorizes.
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], length_scale: f64, noise: f64) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::Argument(
                "GP needs matching, non-empty inputs and targets".into(),
            ));
        }
        if !(length_scale > 0.0 && length_scale.is_finite()) || noise.is_nan() || noise < 0.0 {
            return Err(Error::Argument(
                "GP length scale must be positive and noise >= 0".into(),
            ));
        }
        let n = ys.len() as f64;
        let y_mean = ys.iter().sum::<f64>() / n;
        let sd = (ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n).sqrt();
        let y_scale = if sd > 1e-12 { sd } else { 1.0 };
        let y = DVector::from_iterator(ys.len(), ys.iter().map(|v| (v - y_mean) / y_scale));
        let base = DMatrix::from_fn(xs.len(), xs.len(), |i, j| {
            (-sq_dist(&xs[i], &xs[j]) / (2.0 * length_scale * length_scale)).exp()
        });
        let mut jitter = noise.max(1e-12);
        loop {
            let k = &base + DMatrix::identity(xs.len(), xs.len()) * jitter;
            if let Some(chol) = Cholesky::new(k) {
                let alpha = chol.solve(&y);
                return Ok(GaussianProcess {
                    xs: xs.to_vec(),
                    y_mean,
                    y_scale,
                    length_scale,
                    chol,
                    alpha,
                    noise: jitter,
                });
            }
            jitter *= 10.0;
            if jitter > 1.0 {
                return Err(Error::Argument(
                    "GP kernel matrix is not positive definite".into(),
                ));
            }
        }
    }

    /// Posterior mean and standard deviation at `x`, in target units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, s) = self.predict_standardized(x);
        (m * self.y_scale + self.y_mean, s * self.y_scale)
    }

    fn predict_standardized(&self, x: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|xi| self.kernel(xi, x)));
        let mean = k.dot(&self.alpha);
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&k)
            .expect("cholesky factor is invertible");
        let var = (1.0 - v.dot(&v)).max(0.0);
        (mean, var.sqrt())
    }

    /// Expected improvement below `best` (target units) with exploration
    /// margin `xi` in standardized units. Never negative.
    pub fn expected_improvement(&self, x: &[f64], best: f64, xi: f64) -> f64 {
        let (m, s) = self.predict_standardized(x);
        let best = (best - self.y_mean) / self.y_scale;
        expected_improvement(m, s, best, xi) * self.y_scale
    }
}

/// EI for minimization of a Gaussian `N(mean, sd²)` against `best`.
pub fn expected_improvement(mean: f64, sd: f64, best: f64, xi: f64) -> f64 {
    let imp = best - mean - xi;
    if sd <= 1e-12 {
        return imp.max(0.0);
    }
    let z = imp / sd;
    let n = Normal::standard();
    (imp * n.cdf(z) + sd * n.pdf(z)).max(0.0)
}
