//! Independent reference computations used to validate the solver.
//!
//! Nothing here is on the solver's hot path: the quadrature versions of the
//! nonlocal operators are `O(n²)`, the stationary coherence comes from a
//! scalar self-consistency equation, and the particle simulator integrates the
//! microscopic phase dynamics directly.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coupling::{polar_from_moments, CouplingParams, PolarOrder};
use crate::density::von_mises;
use crate::dynamics::{Controls, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{CircleGrid, Field};

/// `w(θ_j) = dθ Σ_{j'} sin(θ_{j'} − θ_j − α) q_{j'}` by direct summation.
pub fn w_quadrature(q: &Field, alpha: f64) -> Field {
    let grid = q.grid();
    let theta = grid.theta();
    let values = theta
        .iter()
        .map(|&t| {
            grid.d_theta()
                * theta
                    .iter()
                    .zip(q.values())
                    .map(|(&tp, &v)| (tp - t - alpha).sin() * v)
                    .sum::<f64>()
        })
        .collect();
    Field::new(grid, values).expect("finite input")
}

/// `w*(θ_j) = dθ Σ_{j'} sin(θ_j − θ_{j'} − α) g_{j'}` by direct summation.
pub fn w_star_quadrature(g: &Field, alpha: f64) -> Field {
    let grid = g.grid();
    let theta = grid.theta();
    let values = theta
        .iter()
        .map(|&t| {
            grid.d_theta()
                * theta
                    .iter()
                    .zip(g.values())
                    .map(|(&tp, &v)| (t - tp - alpha).sin() * v)
                    .sum::<f64>()
        })
        .collect();
    Field::new(grid, values).expect("finite input")
}

/// `(I₀(x), I₁(x))` from their power series. Accurate for moderate `x`
/// (overflows beyond `x ≈ 700`).
pub fn bessel_i0_i1_series(x: f64) -> (f64, f64) {
    let h = 0.5 * x;
    let h2 = h * h;
    let mut t0 = 1.0;
    let mut t1 = h;
    let mut i0 = t0;
    let mut i1 = t1;
    let mut m = 1.0;
    loop {
        t0 *= h2 / (m * m);
        t1 *= h2 / (m * (m + 1.0));
        i0 += t0;
        i1 += t1;
        if t0 <= i0 * 1e-17 && t1 <= i1 * 1e-17 {
            break;
        }
        m += 1.0;
    }
    (i0, i1)
}

/// `I₁(x)/I₀(x)` from the continued fraction
/// `1 / (2/x + 1 / (4/x + 1 / (6/x + …)))`, evaluated with Lentz's method.
pub fn bessel_ratio(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x < 0.0 {
        return -bessel_ratio(-x);
    }
    const TINY: f64 = 1e-300;
    let b = |j: f64| 2.0 * j / x;
    let mut f = b(1.0);
    let mut c = f;
    let mut d = 0.0;
    let mut j = 2.0;
    loop {
        d += b(j);
        if d == 0.0 {
            d = TINY;
        }
        d = 1.0 / d;
        c = b(j) + 1.0 / c;
        if c == 0.0 {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 || j > 1e6 {
            break;
        }
        j += 1.0;
    }
    1.0 / f
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub r_star: f64,
    pub psi_star: f64,
    pub converged: bool,
    pub residual: f64,
}

/// Residual threshold for a converged fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-10;

/// Stationary coherence of the uncontrolled, lag-free model: the largest
/// root of `R = I₁(K R / D) / I₀(K R / D)`, found by bisection. Below the
/// threshold `K/D ≤ 2` only the incoherent root `R = 0` exists.
pub fn stationary_fixed_point(params: &CouplingParams) -> Result<FixedPointResult> {
    params.validate()?;
    if !(params.coupling > 0.0) {
        return Err(Error::InvalidParameter(
            "stationary fixed point needs K > 0".into(),
        ));
    }
    if params.alpha != 0.0 {
        return Err(Error::InvalidParameter(
            "stationary fixed point is only available for zero phase lag".into(),
        ));
    }
    let ratio = params.coupling / params.diffusion;
    let f = |r: f64| bessel_ratio(ratio * r) - r;
    if ratio <= 2.0 {
        return Ok(FixedPointResult {
            r_star: 0.0,
            psi_star: 0.0,
            converged: true,
            residual: 0.0,
        });
    }
    let mut lo = 1e-9;
    let mut hi = 1.0;
    if !(f(lo) > 0.0) {
        // threshold so close that the root is below the bracket
        return Ok(FixedPointResult {
            r_star: 0.0,
            psi_star: 0.0,
            converged: true,
            residual: 0.0,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    let r_star = 0.5 * (lo + hi);
    let residual = f(r_star).abs();
    Ok(FixedPointResult {
        r_star,
        psi_star: 0.0,
        converged: residual <= FIXED_POINT_TOL,
        residual,
    })
}

/// Stationary density `∝ exp((K R*/D) cos(θ − ψ))`, normalized on the grid.
pub fn stationary_density(
    grid: &CircleGrid,
    params: &CouplingParams,
    r_star: f64,
    psi: f64,
) -> Result<Field> {
    von_mises(grid, psi, params.coupling * r_star / params.diffusion)
}

/// Random real field `Σ_{m ≤ max_mode} a_m cos mθ + b_m sin mθ`, standard
/// normal coefficients.
pub fn random_band_limited_field<R: Rng + ?Sized>(
    grid: &CircleGrid,
    max_mode: usize,
    rng: &mut R,
) -> Field {
    let coeffs: Vec<(f64, f64)> = (0..=max_mode)
        .map(|m| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = if m == 0 { 0.0 } else { rng.sample(StandardNormal) };
            (a, b)
        })
        .collect();
    Field::from_fn(grid, |t| {
        coeffs
            .iter()
            .enumerate()
            .map(|(m, (a, b))| {
                let mt = m as f64 * t;
                a * mt.cos() + b * mt.sin()
            })
            .sum()
    })
    .expect("finite coefficients")
}

/// Random space-time field, band-limited in `θ` and smooth in `t`
/// (`cos(lπt/T)` profiles up to `max_time_mode`).
pub fn random_band_limited_trajectory<R: Rng + ?Sized>(
    grid: &CircleGrid,
    time: &TimeGrid,
    max_mode: usize,
    max_time_mode: usize,
    rng: &mut R,
) -> Trajectory {
    let fields: Vec<Field> = (0..=max_time_mode)
        .map(|_| random_band_limited_field(grid, max_mode, rng))
        .collect();
    let n = grid.n_theta();
    let mut data = Vec::with_capacity(n * time.n_rows());
    for k in 0..time.n_rows() {
        let s = time.t(k) / time.t_final();
        for j in 0..n {
            data.push(
                fields
                    .iter()
                    .enumerate()
                    .map(|(l, f)| (l as f64 * PI * s).cos() * f.values()[j])
                    .sum(),
            );
        }
    }
    Trajectory::new(grid, time, data).expect("finite coefficients")
}

/// A finite population of oscillators for cross-validating the mean field.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    thetas: Vec<f64>,
    seed: u64,
}

fn particle_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

impl ParticleEnsemble {
    pub fn from_phases(thetas: Vec<f64>, seed: u64) -> Result<Self> {
        if thetas.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "particle ensemble needs N >= 2, got {}",
                thetas.len()
            )));
        }
        if thetas.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("non-finite phase".into()));
        }
        Ok(Self {
            thetas: thetas.into_iter().map(wrap).collect(),
            seed,
        })
    }

    /// Draws `n` phases i.i.d. from a grid density, treating it as piecewise
    /// constant on cells centred at the nodes. Particle `i` draws its phase
    /// from stream `2i` of `seed` and its noise from stream `2i + 1`.
    pub fn sample_from_density(q: &Field, n: usize, seed: u64) -> Result<Self> {
        let grid = q.grid();
        if q.min() < 0.0 {
            return Err(Error::NegativeDensity { min: q.min() });
        }
        let total: f64 = q.values().iter().sum();
        let mut cdf = Vec::with_capacity(q.values().len());
        let mut acc = 0.0;
        for v in q.values() {
            acc += v / total;
            cdf.push(acc);
        }
        let dth = grid.d_theta();
        let thetas = (0..n)
            .map(|i| {
                let mut rng = particle_rng(seed, 2 * i);
                let u: f64 = rng.random();
                let cell = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
                let offset: f64 = rng.random::<f64>() - 0.5;
                grid.theta()[cell] + offset * dth
            })
            .collect();
        Self::from_phases(thetas, seed)
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn wrap(t: f64) -> f64 {
    crate::coupling::wrap_angle(t)
}

/// Discrete order parameter `R e^{iψ} = (1/N) Σ e^{iθ_j}`.
pub fn discrete_order(thetas: &[f64]) -> PolarOrder {
    let n = thetas.len() as f64;
    let (c, s) = thetas
        .iter()
        .fold((0.0, 0.0), |(c, s), t| (c + t.cos(), s + t.sin()));
    polar_from_moments(c / n, s / n)
}

/// `(1/N) Σ_j sin(θ_j − θ_i − α)` for every `i`, by the `O(N²)` double sum.
pub fn pairwise_interaction(thetas: &[f64], alpha: f64) -> Vec<f64> {
    let n = thetas.len() as f64;
    thetas
        .iter()
        .map(|&ti| thetas.iter().map(|&tj| (tj - ti - alpha).sin()).sum::<f64>() / n)
        .collect()
}

/// Same sum in `O(N)` through `R_N sin(ψ_N − θ_i − α)`.
pub fn moment_interaction(thetas: &[f64], alpha: f64) -> Vec<f64> {
    let n = thetas.len() as f64;
    let (c, s) = thetas
        .iter()
        .fold((0.0, 0.0), |(c, s), t| (c + t.cos(), s + t.sin()));
    let (c, s) = (c / n, s / n);
    let (sa, ca) = alpha.sin_cos();
    thetas
        .iter()
        .map(|&t| {
            let (st, ct) = t.sin_cos();
            let x = s * ct - c * st;
            let y = c * ct + s * st;
            x * ca - y * sa
        })
        .collect()
}

/// Periodic linear interpolation of grid samples at angle `theta`.
fn interpolate(row: &[f64], d_theta: f64, theta: f64) -> f64 {
    let n = row.len();
    let x = theta / d_theta;
    let j0 = x.floor();
    let frac = x - j0;
    let i0 = (j0 as usize) % n;
    let i1 = (i0 + 1) % n;
    (1.0 - frac) * row[i0] + frac * row[i1]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleSample {
    pub t: f64,
    pub r: f64,
    pub psi: f64,
}

/// Euler–Maruyama integration of
/// `dθ_i = (u1(θ_i, t) + u2(θ_i, t) R_N sin(ψ_N − θ_i − α)) dt + √(2D) dW_i`.
///
/// Controls are interpolated linearly in `θ` and held constant over each
/// step. Returns `(R_N, ψ_N)` at every node of `time`.
pub fn simulate_particles(
    ens: &ParticleEnsemble,
    controls: &Controls,
    params: &CouplingParams,
    time: &TimeGrid,
) -> Result<Vec<ParticleSample>> {
    if ens.len() < 2 {
        return Err(Error::InvalidParameter("particle ensemble needs N >= 2".into()));
    }
    if controls.time() != time {
        return Err(Error::ShapeMismatch("controls do not match time grid".into()));
    }
    let grid = controls.grid();
    let dt = time.dt();
    let noise = (2.0 * params.diffusion.max(0.0) * dt).sqrt();
    let mut thetas = ens.thetas.clone();
    let mut rngs: Vec<ChaCha8Rng> = (0..thetas.len())
        .map(|i| particle_rng(ens.seed, 2 * i + 1))
        .collect();

    let mut out = Vec::with_capacity(time.n_rows());
    for k in 0..time.n_rows() {
        let order = discrete_order(&thetas);
        out.push(ParticleSample {
            t: time.t(k),
            r: order.r,
            psi: order.psi,
        });
        if k == time.n_t() {
            break;
        }
        let u1 = controls.u1.row(k);
        let u2 = controls.u2.row(k);
        let coupling = moment_interaction(&thetas, params.alpha);
        for ((th, rng), c) in thetas.iter_mut().zip(rngs.iter_mut()).zip(&coupling) {
            let a = interpolate(u1, grid.d_theta(), *th);
            let b = interpolate(u2, grid.d_theta(), *th);
            let xi: f64 = if noise > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            *th = wrap(*th + dt * (a + b * c) + noise * xi);
        }
    }
    Ok(out)
}
