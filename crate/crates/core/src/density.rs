//! Density profiles on the circle, normalized on the grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CircleGrid, Field};

/// Unnormalized wrapped Gaussian `Σ_m exp(−(θ − μ + 2πm)² / 2σ²)`.
pub fn wrapped_gaussian_profile(theta: f64, mean: f64, sigma: f64) -> f64 {
    let wraps = (6.0 * sigma / (2.0 * PI)).ceil() as i64 + 1;
    let d = (theta - mean).rem_euclid(2.0 * PI);
    (-wraps..=wraps)
        .map(|m| {
            let x = d + 2.0 * PI * m as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .sum()
}

pub fn uniform(grid: &CircleGrid) -> Field {
    Field::constant(grid, 1.0 / (2.0 * PI))
}

pub fn wrapped_gaussian(grid: &CircleGrid, mean: f64, sigma: f64) -> Result<Field> {
    if !(sigma > 0.0) || !sigma.is_finite() || !mean.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "wrapped gaussian needs finite mean and sigma > 0 (mean = {mean}, sigma = {sigma})"
        )));
    }
    Field::from_fn(grid, |t| wrapped_gaussian_profile(t, mean, sigma))?.normalized()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sigma: f64,
}

pub fn gaussian_mixture(grid: &CircleGrid, components: &[MixtureComponent]) -> Result<Field> {
    if components.is_empty() {
        return Err(Error::InvalidParameter("empty mixture".into()));
    }
    let mut acc = vec![0.0; grid.n_theta()];
    for c in components {
        if !(c.weight >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mixture weights must be >= 0, got {}",
                c.weight
            )));
        }
        let g = wrapped_gaussian(grid, c.mean, c.sigma)?;
        for (a, v) in acc.iter_mut().zip(g.values()) {
            *a += c.weight * v;
        }
    }
    Field::new(grid, acc)?.normalized()
}

/// Von Mises profile `exp(κ cos(θ − μ))`, normalized on the grid.
pub fn von_mises(grid: &CircleGrid, mean: f64, kappa: f64) -> Result<Field> {
    // subtract the peak exponent to stay finite for large κ
    Field::from_fn(grid, |t| (kappa * ((t - mean).cos() - 1.0)).exp())?.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_is_normalized_and_peaked_at_mean() {
        let g = CircleGrid::new(128).unwrap();
        let q = wrapped_gaussian(&g, 1.5 * PI, 0.4).unwrap();
        assert!((q.integral() - 1.0).abs() < 1e-13);
        assert!(q.min() >= 0.0);
        let argmax = q
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 96);
    }

    #[test]
    fn wide_gaussian_wraps() {
        // σ = 3 is nearly uniform once wrapped
        let g = CircleGrid::new(64).unwrap();
        let q = wrapped_gaussian(&g, 0.0, 3.0).unwrap();
        let spread = q.values().iter().copied().fold(0.0, f64::max) - q.min();
        assert!(spread < 0.02);
    }

    #[test]
    fn mixture_weights() {
        let g = CircleGrid::new(64).unwrap();
        let q = gaussian_mixture(
            &g,
            &[
                MixtureComponent { weight: 1.0, mean: 1.0, sigma: 0.3 },
                MixtureComponent { weight: 3.0, mean: 4.0, sigma: 0.3 },
            ],
        )
        .unwrap();
        assert!((q.integral() - 1.0).abs() < 1e-13);
        assert!(gaussian_mixture(&g, &[]).is_err());
    }

    #[test]
    fn invalid_sigma() {
        let g = CircleGrid::new(64).unwrap();
        assert!(wrapped_gaussian(&g, 0.0, 0.0).is_err());
        assert!(wrapped_gaussian(&g, 0.0, -1.0).is_err());
    }
}
