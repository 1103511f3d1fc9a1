//! Uniform periodic grid on the circle with Fourier pseudospectral operators.
//!
//! Nodes sit at `θ_j = 2πj/n` for `j = 0..n`, with no duplicated endpoint.
//! Derivatives and the diffusion propagator act mode-by-mode on the discrete
//! Fourier transform. The Nyquist mode is dropped by the first derivative so
//! that `∂_θ` stays real and skew-symmetric; the second derivative and the
//! heat propagator keep it with wavenumber `n/2`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

struct GridInner {
    n: usize,
    d_theta: f64,
    theta: Vec<f64>,
    /// Signed wavenumber of each FFT bin; the Nyquist bin carries `n/2`.
    k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Periodic discretization of `[0, 2π)`. Cheap to clone.
#[derive(Clone)]
pub struct CircleGrid(Arc<GridInner>);

impl fmt::Debug for CircleGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CircleGrid")
            .field("n_theta", &self.0.n)
            .finish()
    }
}

impl PartialEq for CircleGrid {
    fn eq(&self, other: &Self) -> bool {
        self.0.n == other.0.n
    }
}

impl CircleGrid {
    pub const DEFAULT_N_THETA: usize = 128;

    pub fn new(n_theta: usize) -> Result<Self> {
        if n_theta < 8 || !n_theta.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n_theta must be even and >= 8, got {n_theta}"
            )));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n_theta);
        let inv = planner.plan_fft_inverse(n_theta);
        let d_theta = 2.0 * PI / n_theta as f64;
        let theta = (0..n_theta).map(|j| j as f64 * d_theta).collect();
        let half = n_theta / 2;
        let k = (0..n_theta)
            .map(|j| {
                if j <= half {
                    j as f64
                } else {
                    j as f64 - n_theta as f64
                }
            })
            .collect();
        Ok(Self(Arc::new(GridInner {
            n: n_theta,
            d_theta,
            theta,
            k,
            fwd,
            inv,
        })))
    }

    pub fn n_theta(&self) -> usize {
        self.0.n
    }

    pub fn d_theta(&self) -> f64 {
        self.0.d_theta
    }

    pub fn theta(&self) -> &[f64] {
        &self.0.theta
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.0.n {
            return Err(Error::GridMismatch {
                expected: self.0.n,
                got: len,
            });
        }
        Ok(())
    }

    fn forward(&self, values: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.0.fwd.process(&mut buf);
        buf
    }

    fn inverse(&self, mut spec: Vec<Complex<f64>>) -> Vec<f64> {
        self.0.inv.process(&mut spec);
        let scale = 1.0 / self.0.n as f64;
        spec.into_iter().map(|c| c.re * scale).collect()
    }

    /// Applies a per-bin multiplier `m(bin, k)` in Fourier space.
    fn spectral_map<F>(&self, values: &[f64], mult: F) -> Vec<f64>
    where
        F: Fn(usize, f64) -> Complex<f64>,
    {
        let mut spec = self.forward(values);
        for (bin, c) in spec.iter_mut().enumerate() {
            *c *= mult(bin, self.0.k[bin]);
        }
        self.inverse(spec)
    }

    pub(crate) fn ddtheta_raw(&self, values: &[f64]) -> Vec<f64> {
        let nyq = self.0.n / 2;
        self.spectral_map(values, |bin, k| {
            if bin == nyq {
                Complex::new(0.0, 0.0)
            } else {
                Complex::new(0.0, k)
            }
        })
    }

    pub(crate) fn d2dtheta2_raw(&self, values: &[f64]) -> Vec<f64> {
        self.spectral_map(values, |_, k| Complex::new(-k * k, 0.0))
    }

    pub(crate) fn diffuse_raw(&self, values: &[f64], diffusion: f64, dt: f64) -> Vec<f64> {
        if diffusion == 0.0 {
            return values.to_vec();
        }
        self.spectral_map(values, |_, k| {
            Complex::new((-diffusion * k * k * dt).exp(), 0.0)
        })
    }

    /// Zeroes every mode with `|k| > n/3` (2/3 rule).
    pub(crate) fn dealias_raw(&self, values: &[f64]) -> Vec<f64> {
        let cutoff = self.0.n as f64 / 3.0;
        self.spectral_map(values, |_, k| {
            if k.abs() > cutoff {
                Complex::new(0.0, 0.0)
            } else {
                Complex::new(1.0, 0.0)
            }
        })
    }

    pub(crate) fn integrate_raw(&self, values: &[f64]) -> f64 {
        self.0.d_theta * values.iter().sum::<f64>()
    }

    /// Spectral first derivative. Mode `k` is multiplied by `ik`, the Nyquist
    /// mode is sent to zero.
    pub fn ddtheta(&self, f: &Field) -> Result<Field> {
        self.check_field(f)?;
        Ok(Field::from_raw(self.clone(), self.ddtheta_raw(&f.values)))
    }

    pub fn d2dtheta2(&self, f: &Field) -> Result<Field> {
        self.check_field(f)?;
        Ok(Field::from_raw(self.clone(), self.d2dtheta2_raw(&f.values)))
    }

    /// Rectangle rule `dθ Σ f_j`, spectrally accurate for smooth periodic `f`.
    pub fn integrate(&self, f: &Field) -> Result<f64> {
        self.check_field(f)?;
        Ok(self.integrate_raw(&f.values))
    }

    /// Exact heat propagator over `dt`: mode `k` decays by `exp(-D k² dt)`.
    pub fn diffuse(&self, f: &Field, diffusion: f64, dt: f64) -> Result<Field> {
        self.check_field(f)?;
        if !(diffusion >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "diffusion coefficient must be >= 0, got {diffusion}"
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
        }
        Ok(Field::from_raw(
            self.clone(),
            self.diffuse_raw(&f.values, diffusion, dt),
        ))
    }

    fn check_field(&self, f: &Field) -> Result<()> {
        self.check_len(f.values.len())?;
        check_finite("field", &f.values)
    }
}

pub(crate) fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// Samples of one real function on a [`CircleGrid`] at a single time.
#[derive(Clone, Debug)]
pub struct Field {
    grid: CircleGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &CircleGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len())?;
        check_finite("field", &values)?;
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub(crate) fn from_raw(grid: CircleGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.n_theta(), values.len());
        Self { grid, values }
    }

    pub fn from_fn(grid: &CircleGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.theta().iter().map(|&t| f(t)).collect())
    }

    pub fn constant(grid: &CircleGrid, c: f64) -> Self {
        Self::from_raw(grid.clone(), vec![c; grid.n_theta()])
    }

    pub fn grid(&self) -> &CircleGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate_raw(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.grid.check_len(other.values.len())?;
        Ok(Field::from_raw(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| v * s)
    }

    /// Rotates the samples by `shift` grid nodes: `out(θ_j) = f(θ_{j - shift})`.
    pub fn rotate_nodes(&self, shift: isize) -> Field {
        Field::from_raw(self.grid.clone(), rotate(&self.values, shift))
    }

    /// Rescales so that the grid integral equals one.
    pub fn normalized(&self) -> Result<Field> {
        let mass = self.integral();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::NotNormalized { mass });
        }
        Ok(self.scale(1.0 / mass))
    }
}

pub(crate) fn rotate(values: &[f64], shift: isize) -> Vec<f64> {
    let n = values.len() as isize;
    (0..n)
        .map(|j| values[(j - shift).rem_euclid(n) as usize])
        .collect()
}
