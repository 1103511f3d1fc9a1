//! Kuramoto interaction functionals and the polar order parameter.
//!
//! The kernel `sin(θ' − θ − α)` is separable with rank two, so both
//! `w[q](θ) = ∫ sin(θ' − θ − α) q(θ') dθ'` and its adjoint
//! `w*[g](θ) = ∫ sin(θ − θ' − α) g(θ') dθ'` reduce to the first circular
//! moments `A e^{iφ} = ∫ e^{iθ'} q dθ'`:
//!
//! ```text
//! w[q](θ)  = A sin(φ − θ − α)
//! w*[g](θ) = A sin(θ − φ − α)
//! ```
//!
//! For a normalized density `A e^{iφ}` is exactly `R e^{iψ}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CircleGrid, Field};

/// Physical parameters of the mean-field model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingParams {
    /// Phase lag (rad).
    pub alpha: f64,
    /// Diffusion coefficient (rad²/s).
    #[serde(rename = "d")]
    pub diffusion: f64,
    /// Baseline interaction strength.
    #[serde(rename = "k")]
    pub coupling: f64,
}

impl Default for CouplingParams {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            diffusion: 0.25,
            coupling: 1.0,
        }
    }
}

impl CouplingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.diffusion > 0.0) || !self.diffusion.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "diffusion coefficient D must be > 0, got {}",
                self.diffusion
            )));
        }
        if !self.alpha.is_finite() || !self.coupling.is_finite() {
            return Err(Error::InvalidParameter(
                "alpha and K must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Coherence amplitude `R` and mean-field phase `ψ ∈ [0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarOrder {
    pub r: f64,
    pub psi: f64,
}

/// Tolerance on `∫q − 1` accepted by [`order_parameter`].
pub const NORMALIZATION_TOL: f64 = 1e-3;

pub(crate) fn moments_raw(grid: &CircleGrid, values: &[f64]) -> (f64, f64) {
    let (c, s) = grid
        .theta()
        .iter()
        .zip(values)
        .fold((0.0, 0.0), |(c, s), (&t, &v)| (c + t.cos() * v, s + t.sin() * v));
    (c * grid.d_theta(), s * grid.d_theta())
}

/// First circular moments `(∫cos θ q dθ, ∫sin θ q dθ)`.
pub fn moments(q: &Field) -> (f64, f64) {
    moments_raw(q.grid(), q.values())
}

pub fn wrap_angle(x: f64) -> f64 {
    let w = x.rem_euclid(2.0 * PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

pub(crate) fn polar_from_moments(c: f64, s: f64) -> PolarOrder {
    PolarOrder {
        r: c.hypot(s),
        psi: wrap_angle(s.atan2(c)),
    }
}

/// Continuous polar order parameter `R e^{iψ} = ∫ e^{iθ} q dθ`.
pub fn order_parameter(q: &Field) -> Result<PolarOrder> {
    let mass = q.integral();
    if !((mass - 1.0).abs() <= NORMALIZATION_TOL) {
        return Err(Error::NotNormalized { mass });
    }
    let (c, s) = moments(q);
    Ok(polar_from_moments(c, s))
}

/// Writes `A sin(sign·(φ − θ) − α)` into `out`, given the moments `(c, s)`.
///
/// With `sign = +1` this is `w`, with `sign = −1` it is `w*`. Expanded so
/// that no `atan2` is needed: `A sin(φ − θ) = s cos θ − c sin θ`.
fn kernel_from_moments(grid: &CircleGrid, c: f64, s: f64, alpha: f64, adjoint: bool) -> Vec<f64> {
    let (sa, ca) = alpha.sin_cos();
    grid.theta()
        .iter()
        .map(|&t| {
            let (st, ct) = t.sin_cos();
            // x = A sin(φ − θ), y = A cos(φ − θ)
            let x = s * ct - c * st;
            let y = c * ct + s * st;
            if adjoint {
                // A sin(θ − φ − α) = −x cos α − y sin α
                -x * ca - y * sa
            } else {
                // A sin(φ − θ − α) = x cos α − y sin α
                x * ca - y * sa
            }
        })
        .collect()
}

pub(crate) fn w_raw(grid: &CircleGrid, values: &[f64], alpha: f64) -> Vec<f64> {
    let (c, s) = moments_raw(grid, values);
    kernel_from_moments(grid, c, s, alpha, false)
}

pub(crate) fn w_star_raw(grid: &CircleGrid, values: &[f64], alpha: f64) -> Vec<f64> {
    let (c, s) = moments_raw(grid, values);
    kernel_from_moments(grid, c, s, alpha, true)
}

/// Nonlocal transport velocity `w[q](θ) = ∫ sin(θ' − θ − α) q(θ') dθ'`.
pub fn w_of(q: &Field, alpha: f64) -> Field {
    Field::from_raw(q.grid().clone(), w_raw(q.grid(), q.values(), alpha))
}

/// Adjoint functional `w*[g](θ) = ∫ sin(θ − θ' − α) g(θ') dθ'`.
pub fn w_star_of(g: &Field, alpha: f64) -> Field {
    Field::from_raw(g.grid().clone(), w_star_raw(g.grid(), g.values(), alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::wrapped_gaussian;

    fn grid() -> CircleGrid {
        CircleGrid::new(128).unwrap()
    }

    fn cosine_bump(g: &CircleGrid) -> Field {
        Field::from_fn(g, |t| (1.0 + t.cos()) / (2.0 * PI)).unwrap()
    }

    fn max_diff(a: &Field, f: impl Fn(f64) -> f64) -> f64 {
        a.grid()
            .theta()
            .iter()
            .zip(a.values())
            .map(|(&t, &v)| (v - f(t)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn moments_examples() {
        let g = grid();
        let (c, s) = moments(&Field::constant(&g, 1.0 / (2.0 * PI)));
        assert!(c.abs() < 1e-15 && s.abs() < 1e-15);
        let (c, s) = moments(&cosine_bump(&g));
        assert!((c - 0.5).abs() < 1e-14 && s.abs() < 1e-14);
        let spike = wrapped_gaussian(&g, PI / 2.0, 0.02).unwrap();
        let (c, s) = moments(&spike);
        assert!(c.abs() < 1e-3 && (s - 1.0).abs() < 1e-3);
    }

    #[test]
    fn order_parameter_examples() {
        let g = grid();
        let uniform = Field::constant(&g, 1.0 / (2.0 * PI));
        assert!(order_parameter(&uniform).unwrap().r < 1e-15);

        let p = order_parameter(&cosine_bump(&g)).unwrap();
        assert!((p.r - 0.5).abs() < 1e-14);
        assert!(p.psi.abs() < 1e-14);

        let locked = wrapped_gaussian(&g, 1.5 * PI, 0.02).unwrap();
        let p = order_parameter(&locked).unwrap();
        assert!(p.r > 0.999 && p.r <= 1.0 + 1e-9);
        assert!((p.psi - 1.5 * PI).abs() < 1e-9);
    }

    #[test]
    fn order_parameter_requires_normalization() {
        let g = grid();
        let q = Field::constant(&g, 1.0);
        assert!(matches!(
            order_parameter(&q),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn w_examples() {
        let g = grid();
        let uniform = Field::constant(&g, 1.0 / (2.0 * PI));
        for alpha in [0.0, 0.3, -1.2] {
            assert!(w_of(&uniform, alpha).max_abs() < 1e-15);
        }
        let q = cosine_bump(&g);
        assert!(max_diff(&w_of(&q, 0.0), |t| -t.sin() / 2.0) < 1e-14);
        assert!(max_diff(&w_of(&q, PI / 2.0), |t| -t.cos() / 2.0) < 1e-14);
    }

    #[test]
    fn w_star_examples() {
        let g = grid();
        assert!(w_star_of(&Field::constant(&g, 3.0), 0.4).max_abs() < 1e-13);
        let q = cosine_bump(&g);
        assert!(max_diff(&w_star_of(&q, 0.0), |t| t.sin() / 2.0) < 1e-14);
    }

    #[test]
    fn wrap_angle_range() {
        for x in [-1e-17, -2.0 * PI, 0.0, 7.0, -0.5, 4.0 * PI] {
            let w = wrap_angle(x);
            assert!((0.0..2.0 * PI).contains(&w), "{x} -> {w}");
        }
    }

    #[test]
    fn params_validate() {
        assert!(CouplingParams::default().validate().is_ok());
        let bad = CouplingParams {
            diffusion: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
