//! Forward state and backward adjoint solvers for the controlled mean-field
//! Kuramoto equation
//!
//! ```text
//! q_t − D q_θθ + ∂_θ(u2 w[q] q + u1 q) = s
//! −p_t − D p_θθ − (u2 w[q] + u1) p_θ − w*[u2 p_θ q] = α_r (q − z),   p(T) = α_t (q(T) − z(T))
//! ```
//!
//! Both are integrated with an integrating-factor Heun scheme: diffusion is
//! propagated exactly in Fourier space and the nonlocal transport and source
//! terms go through the two explicit stages. Stage one uses the controls at
//! the start of the step and stage two those at the end, so the adjoint only
//! ever needs stored state rows.

use serde::{Deserialize, Serialize};

use crate::coupling::{w_raw, w_star_raw, CouplingParams};
use crate::error::{Error, Result};
use crate::grid::{check_finite, rotate, CircleGrid, Field};

/// CFL safety factor applied to `dθ / (max|u1| + max|u2|)`.
pub const CFL_SAFETY: f64 = 0.5;
const CFL_EPS: f64 = 1e-12;

/// Tolerance on the initial density's mass.
pub const INITIAL_MASS_TOL: f64 = 1e-10;
/// Tolerance on the initial density's negative part.
pub const INITIAL_NEGATIVITY_TOL: f64 = -1e-12;

/// Uniform time discretization `t_k = k T / n_t`, `k = 0..=n_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    n_t: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_t: usize) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "final time must be > 0, got {t_final}"
            )));
        }
        if n_t == 0 {
            return Err(Error::InvalidParameter("n_t must be >= 1".into()));
        }
        Ok(Self { t_final, n_t })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_t as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn n_rows(&self) -> usize {
        self.n_t + 1
    }

    /// Trapezoid weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n_t {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }
}

/// Space-time samples, one grid row per time node (time-major).
#[derive(Clone, Debug)]
pub struct Trajectory {
    grid: CircleGrid,
    time: TimeGrid,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: &CircleGrid, time: &TimeGrid, data: Vec<f64>) -> Result<Self> {
        let expected = grid.n_theta() * time.n_rows();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "trajectory needs {} x {} = {expected} samples, got {}",
                time.n_rows(),
                grid.n_theta(),
                data.len()
            )));
        }
        check_finite("trajectory", &data)?;
        Ok(Self {
            grid: grid.clone(),
            time: *time,
            data,
        })
    }

    pub fn constant(grid: &CircleGrid, time: &TimeGrid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            time: *time,
            data: vec![c; grid.n_theta() * time.n_rows()],
        }
    }

    /// Replicates a static field over every time node.
    pub fn replicate(field: &Field, time: &TimeGrid) -> Self {
        let mut data = Vec::with_capacity(field.values().len() * time.n_rows());
        for _ in 0..time.n_rows() {
            data.extend_from_slice(field.values());
        }
        Self {
            grid: field.grid().clone(),
            time: *time,
            data,
        }
    }

    pub fn from_fn(grid: &CircleGrid, time: &TimeGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.n_theta() * time.n_rows());
        for k in 0..time.n_rows() {
            let t = time.t(k);
            data.extend(grid.theta().iter().map(|&th| f(th, t)));
        }
        Self::new(grid, time, data)
    }

    pub fn grid(&self) -> &CircleGrid {
        &self.grid
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn n_rows(&self) -> usize {
        self.time.n_rows()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.grid.n_theta();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn row_field(&self, k: usize) -> Field {
        Field::from_raw(self.grid.clone(), self.row(k).to_vec())
    }

    pub fn last_field(&self) -> Field {
        self.row_field(self.time.n_t())
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.grid.n_theta())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn row_integral(&self, k: usize) -> f64 {
        self.grid.integrate_raw(self.row(k))
    }

    pub fn same_shape(&self, other: &Trajectory) -> Result<()> {
        if self.grid != other.grid || self.time != other.time {
            return Err(Error::ShapeMismatch(format!(
                "trajectories differ: {} x {} vs {} x {}",
                self.n_rows(),
                self.grid.n_theta(),
                other.n_rows(),
                other.grid.n_theta()
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Trajectory {
        Trajectory {
            grid: self.grid.clone(),
            time: self.time,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Trajectory, f: impl Fn(f64, f64) -> f64) -> Result<Trajectory> {
        self.same_shape(other)?;
        Ok(Trajectory {
            grid: self.grid.clone(),
            time: self.time,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self + s · other`.
    pub fn axpy(&self, s: f64, other: &Trajectory) -> Result<Trajectory> {
        self.zip_with(other, |a, b| a + s * b)
    }

    /// Discrete `L²(dθ dt)` inner product with trapezoid weights in time.
    pub fn inner(&self, other: &Trajectory) -> Result<f64> {
        self.same_shape(other)?;
        let n = self.grid.n_theta();
        let mut acc = 0.0;
        for k in 0..self.n_rows() {
            let a = &self.data[k * n..(k + 1) * n];
            let b = &other.data[k * n..(k + 1) * n];
            let row: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            acc += self.time.weight(k) * row;
        }
        Ok(acc * self.grid.d_theta())
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).unwrap_or(f64::NAN).sqrt()
    }

    /// Rotates every row by `shift` grid nodes.
    pub fn rotate_nodes(&self, shift: isize) -> Trajectory {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            data.extend(rotate(row, shift));
        }
        Trajectory {
            grid: self.grid.clone(),
            time: self.time,
            data,
        }
    }

    pub(crate) fn from_rows(grid: &CircleGrid, time: &TimeGrid, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.n_theta() * time.n_rows());
        Self {
            grid: grid.clone(),
            time: *time,
            data,
        }
    }
}

/// Which controls are optimized in a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Angular velocity field `u1`, with `u2 ≡ K`.
    #[default]
    Velocity,
    /// Interaction strength `u2`, with `u1 ≡ 0`.
    Interaction,
    /// Additive source `s`, with `u1 ≡ 0` and `u2 ≡ K`.
    LinearSource,
    /// `u1` and `u2` together.
    Joint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    U1,
    U2,
    Source,
}

impl ControlKind {
    pub fn name(self) -> &'static str {
        match self {
            ControlKind::U1 => "u1",
            ControlKind::U2 => "u2",
            ControlKind::Source => "source",
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            ControlKind::U1 => "rad/s",
            ControlKind::U2 => "1",
            ControlKind::Source => "1/(rad s)",
        }
    }
}

impl ControlMode {
    pub fn active(self) -> &'static [ControlKind] {
        match self {
            ControlMode::Velocity => &[ControlKind::U1],
            ControlMode::Interaction => &[ControlKind::U2],
            ControlMode::LinearSource => &[ControlKind::Source],
            ControlMode::Joint => &[ControlKind::U1, ControlKind::U2],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ControlMode::Velocity => "velocity",
            ControlMode::Interaction => "interaction",
            ControlMode::LinearSource => "linear_source",
            ControlMode::Joint => "joint",
        }
    }
}

/// Space-time structure imposed on the optimized controls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlShape {
    #[default]
    SpaceTime,
    SpaceOnly,
    TimeOnly,
    Constant,
}

impl ControlShape {
    /// Orthogonal `L²(dθ dt)` projection onto the shape's subspace: time
    /// average for `SpaceOnly`, angle average for `TimeOnly`, both for
    /// `Constant`.
    pub fn project(self, u: &Trajectory) -> Trajectory {
        let n = u.grid.n_theta();
        let time = u.time;
        match self {
            ControlShape::SpaceTime => u.clone(),
            ControlShape::SpaceOnly => {
                let avg = time_average(u);
                let mut data = Vec::with_capacity(u.data.len());
                for _ in 0..time.n_rows() {
                    data.extend_from_slice(&avg);
                }
                Trajectory::from_rows(&u.grid, &time, data)
            }
            ControlShape::TimeOnly => {
                let mut data = Vec::with_capacity(u.data.len());
                for row in u.rows() {
                    let mean = row.iter().sum::<f64>() / n as f64;
                    data.extend(std::iter::repeat_n(mean, n));
                }
                Trajectory::from_rows(&u.grid, &time, data)
            }
            ControlShape::Constant => {
                let avg = time_average(u);
                let mean = avg.iter().sum::<f64>() / n as f64;
                Trajectory::constant(&u.grid, &time, mean)
            }
        }
    }

    pub fn contains(self, u: &Trajectory, tol: f64) -> bool {
        let p = self.project(u);
        p.data
            .iter()
            .zip(&u.data)
            .all(|(a, b)| (a - b).abs() <= tol * (1.0 + b.abs()))
    }
}

fn time_average(u: &Trajectory) -> Vec<f64> {
    let n = u.grid.n_theta();
    let mut acc = vec![0.0; n];
    for (k, row) in u.rows().enumerate() {
        let w = u.time.weight(k);
        for (a, v) in acc.iter_mut().zip(row) {
            *a += w * v;
        }
    }
    let t = u.time.t_final();
    acc.iter_mut().for_each(|a| *a /= t);
    acc
}

/// Full set of control histories. Inactive controls hold their baseline.
#[derive(Clone, Debug)]
pub struct Controls {
    pub u1: Trajectory,
    pub u2: Trajectory,
    pub source: Trajectory,
}

impl Controls {
    /// Uncontrolled dynamics: `u1 ≡ 0`, `u2 ≡ K`, no source.
    pub fn baseline(grid: &CircleGrid, time: &TimeGrid, coupling: f64) -> Self {
        Self {
            u1: Trajectory::constant(grid, time, 0.0),
            u2: Trajectory::constant(grid, time, coupling),
            source: Trajectory::constant(grid, time, 0.0),
        }
    }

    pub fn get(&self, kind: ControlKind) -> &Trajectory {
        match kind {
            ControlKind::U1 => &self.u1,
            ControlKind::U2 => &self.u2,
            ControlKind::Source => &self.source,
        }
    }

    pub fn set(&mut self, kind: ControlKind, value: Trajectory) {
        match kind {
            ControlKind::U1 => self.u1 = value,
            ControlKind::U2 => self.u2 = value,
            ControlKind::Source => self.source = value,
        }
    }

    pub fn grid(&self) -> &CircleGrid {
        self.u1.grid()
    }

    pub fn time(&self) -> &TimeGrid {
        self.u1.time()
    }

    fn check_shapes(&self) -> Result<()> {
        self.u1.same_shape(&self.u2)?;
        self.u1.same_shape(&self.source)
    }

    pub fn rotate_nodes(&self, shift: isize) -> Controls {
        Controls {
            u1: self.u1.rotate_nodes(shift),
            u2: self.u2.rotate_nodes(shift),
            source: self.source.rotate_nodes(shift),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Apply the 2/3 rule to the transport flux before differentiating.
    pub dealias: bool,
}

/// Largest stable `dt` for the given controls.
pub fn cfl_limit(grid: &CircleGrid, controls: &Controls) -> (f64, f64, f64) {
    let max_u1 = controls.u1.max_abs();
    let max_u2 = controls.u2.max_abs();
    let max_dt = CFL_SAFETY * grid.d_theta() / (max_u1 + max_u2 + CFL_EPS);
    (max_dt, max_u1, max_u2)
}

fn check_cfl(grid: &CircleGrid, time: &TimeGrid, controls: &Controls) -> Result<()> {
    let (max_dt, max_u1, max_u2) = cfl_limit(grid, controls);
    let dt = time.dt();
    if dt > max_dt {
        return Err(Error::Cfl {
            dt,
            max_dt,
            max_u1,
            max_u2,
            required_n_t: (time.t_final() / max_dt).ceil() as usize,
        });
    }
    Ok(())
}

/// `−∂_θ(u2 w[q] q + u1 q) + s` on raw rows.
#[allow(clippy::too_many_arguments)]
fn state_nonlinear(
    grid: &CircleGrid,
    q: &[f64],
    u1: &[f64],
    u2: &[f64],
    source: &[f64],
    alpha: f64,
    dealias: bool,
) -> Vec<f64> {
    let w = w_raw(grid, q, alpha);
    let mut flux: Vec<f64> = (0..q.len())
        .map(|j| (u2[j] * w[j] + u1[j]) * q[j])
        .collect();
    if dealias {
        flux = grid.dealias_raw(&flux);
    }
    let mut out = grid.ddtheta_raw(&flux);
    for (o, s) in out.iter_mut().zip(source) {
        *o = -*o + s;
    }
    out
}

/// `(u2 w[q] + u1) p_θ + w*[u2 p_θ q] + α_r m` on raw rows.
#[allow(clippy::too_many_arguments)]
fn adjoint_nonlinear(
    grid: &CircleGrid,
    p: &[f64],
    q: &[f64],
    u1: &[f64],
    u2: &[f64],
    mismatch: &[f64],
    alpha: f64,
    alpha_r: f64,
) -> Vec<f64> {
    let p_theta = grid.ddtheta_raw(p);
    let w = w_raw(grid, q, alpha);
    let g: Vec<f64> = (0..p.len()).map(|j| u2[j] * p_theta[j] * q[j]).collect();
    let ws = w_star_raw(grid, &g, alpha);
    (0..p.len())
        .map(|j| (u2[j] * w[j] + u1[j]) * p_theta[j] + ws[j] + alpha_r * mismatch[j])
        .collect()
}

fn check_same_grid(grid: &CircleGrid, fields: &[&Field]) -> Result<()> {
    for f in fields {
        if f.grid() != grid {
            return Err(Error::GridMismatch {
                expected: grid.n_theta(),
                got: f.grid().n_theta(),
            });
        }
    }
    Ok(())
}

/// Non-diffusive part of `∂q/∂t`: `−∂_θ(u2 w[q] q + u1 q) + source`.
pub fn state_rhs_advective(
    q: &Field,
    u1: &Field,
    u2: &Field,
    params: &CouplingParams,
    source: &Field,
) -> Result<Field> {
    let grid = q.grid();
    check_same_grid(grid, &[u1, u2, source])?;
    Ok(Field::from_raw(
        grid.clone(),
        state_nonlinear(
            grid,
            q.values(),
            u1.values(),
            u2.values(),
            source.values(),
            params.alpha,
            false,
        ),
    ))
}

/// Backward-time rate of the adjoint without diffusion, i.e. `∂p/∂τ − D p_θθ`
/// with `τ = T − t`: `(u2 w[q] + u1) p_θ + w*[u2 p_θ q] + α_r (q − z)`.
pub fn adjoint_rhs(
    p: &Field,
    q: &Field,
    u1: &Field,
    u2: &Field,
    params: &CouplingParams,
    mismatch: &Field,
    alpha_r: f64,
) -> Result<Field> {
    let grid = p.grid();
    check_same_grid(grid, &[q, u1, u2, mismatch])?;
    Ok(Field::from_raw(
        grid.clone(),
        adjoint_nonlinear(
            grid,
            p.values(),
            q.values(),
            u1.values(),
            u2.values(),
            mismatch.values(),
            params.alpha,
            alpha_r,
        ),
    ))
}

/// One integrating-factor Heun step:
/// `y* = E(y + dt N₀)`, `y⁺ = ½ E y + ½ (y* + dt N₁(y*))`.
fn heun_if_step(
    grid: &CircleGrid,
    y: &[f64],
    dt: f64,
    diffusion: f64,
    stage0: impl Fn(&[f64]) -> Vec<f64>,
    stage1: impl Fn(&[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let n0 = stage0(y);
    let ey = grid.diffuse_raw(y, diffusion, dt);
    let en0 = grid.diffuse_raw(&n0, diffusion, dt);
    let star: Vec<f64> = ey.iter().zip(&en0).map(|(a, b)| a + dt * b).collect();
    let n1 = stage1(&star);
    (0..y.len())
        .map(|j| 0.5 * ey[j] + 0.5 * (star[j] + dt * n1[j]))
        .collect()
}

/// Integrates the state equation forward from `q0` over `time`.
pub fn solve_state(
    q0: &Field,
    controls: &Controls,
    params: &CouplingParams,
    time: &TimeGrid,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    params.validate()?;
    let grid = q0.grid();
    controls.check_shapes()?;
    if controls.grid() != grid || controls.time() != time {
        return Err(Error::ShapeMismatch(
            "controls do not match the state grid or time grid".into(),
        ));
    }
    check_finite("initial density", q0.values())?;
    let min = q0.min();
    if min < INITIAL_NEGATIVITY_TOL {
        return Err(Error::NegativeDensity { min });
    }
    let mass = q0.integral();
    if (mass - 1.0).abs() > INITIAL_MASS_TOL {
        return Err(Error::NotNormalized { mass });
    }
    check_cfl(grid, time, controls)?;

    let n = grid.n_theta();
    let dt = time.dt();
    let mut data = Vec::with_capacity(n * time.n_rows());
    data.extend_from_slice(q0.values());
    for k in 0..time.n_t() {
        let q = data[k * n..(k + 1) * n].to_vec();
        let next = heun_if_step(
            grid,
            &q,
            dt,
            params.diffusion,
            |y| {
                state_nonlinear(
                    grid,
                    y,
                    controls.u1.row(k),
                    controls.u2.row(k),
                    controls.source.row(k),
                    params.alpha,
                    opts.dealias,
                )
            },
            |y| {
                state_nonlinear(
                    grid,
                    y,
                    controls.u1.row(k + 1),
                    controls.u2.row(k + 1),
                    controls.source.row(k + 1),
                    params.alpha,
                    opts.dealias,
                )
            },
        );
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: k + 1 });
        }
        data.extend(next);
    }
    Ok(Trajectory::from_rows(grid, time, data))
}

/// Integrates the adjoint equation backward from `p(T) = α_t (q(T) − z(T))`.
pub fn solve_adjoint(
    q_traj: &Trajectory,
    z_traj: &Trajectory,
    controls: &Controls,
    params: &CouplingParams,
    alpha_r: f64,
    alpha_t: f64,
) -> Result<Trajectory> {
    params.validate()?;
    q_traj.same_shape(z_traj)?;
    q_traj.same_shape(&controls.u1)?;
    controls.check_shapes()?;
    let grid = q_traj.grid();
    let time = q_traj.time();
    check_cfl(grid, time, controls)?;

    let n = grid.n_theta();
    let n_t = time.n_t();
    let dt = time.dt();
    let mismatch = q_traj.zip_with(z_traj, |a, b| a - b)?;

    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n_t + 1];
    rows[n_t] = mismatch.row(n_t).iter().map(|m| alpha_t * m).collect();
    for k in (0..n_t).rev() {
        let stage = |row: usize| {
            let q = q_traj.row(row);
            let u1 = controls.u1.row(row);
            let u2 = controls.u2.row(row);
            let m = mismatch.row(row);
            move |p: &[f64]| adjoint_nonlinear(grid, p, q, u1, u2, m, params.alpha, alpha_r)
        };
        let prev = heun_if_step(grid, &rows[k + 1], dt, params.diffusion, stage(k + 1), stage(k));
        if prev.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: k });
        }
        rows[k] = prev;
    }
    let mut data = Vec::with_capacity(n * (n_t + 1));
    for r in rows {
        data.extend(r);
    }
    Ok(Trajectory::from_rows(grid, time, data))
}
