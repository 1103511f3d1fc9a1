//! Tracking cost, reduced gradients and the descent loop.
//!
//! The cost is
//!
//! ```text
//! J = α_r/2 ∬ (q − z)² dθ dt + α_t/2 ∫ (q(T) − z(T))² dθ + 1/2 ∬ Σ β_i (u_i − ū_i)² dθ dt
//! ```
//!
//! where `ū_i` is the reference level of control `i` (zero for `u1` and the
//! source; `K` for `u2` unless the absolute penalty is requested). Time
//! integrals use the trapezoid rule on the stored nodes, which is also the
//! inner product the gradients live in.

mod check;
mod optimize;

pub use check::{
    gradient_check, perturbed_controls, DirectionReport, FdSample, GradientCheckOptions,
    GradientCheckReport,
};
pub use optimize::{
    optimize, optimize_observed, DescentDirection, IterRecord, OptResult, OptStatus,
    OptimizerConfig,
};

use serde::{Deserialize, Serialize};

use crate::coupling::{moments_raw, polar_from_moments, w_raw, CouplingParams};
use crate::dynamics::{
    solve_adjoint, solve_state, ControlKind, ControlMode, ControlShape, Controls, SolverOptions,
    TimeGrid, Trajectory,
};
use crate::error::{Error, Result};
use crate::grid::{CircleGrid, Field};

/// Relative tolerance used to decide whether a control lies in its shape subspace.
const SHAPE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub alpha_r: f64,
    pub alpha_t: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta_lin: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            alpha_r: 1.0,
            alpha_t: 10.0,
            beta1: 1e-3,
            beta2: 1e-3,
            beta_lin: 1e-3,
        }
    }
}

impl CostWeights {
    pub fn beta(&self, kind: ControlKind) -> f64 {
        match kind {
            ControlKind::U1 => self.beta1,
            ControlKind::U2 => self.beta2,
            ControlKind::Source => self.beta_lin,
        }
    }

    pub fn validate(&self, mode: ControlMode) -> Result<()> {
        let all = [self.alpha_r, self.alpha_t, self.beta1, self.beta2, self.beta_lin];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "cost weights must be finite and nonnegative".into(),
            ));
        }
        for &kind in mode.active() {
            if !(self.beta(kind) > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "energy weight of active control {} must be > 0",
                    kind.name()
                )));
            }
        }
        Ok(())
    }
}

/// `J = J_q + J_u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub tracking: f64,
    pub energy: f64,
}

/// Reference level subtracted before the energy penalty.
pub fn energy_reference(kind: ControlKind, coupling: f64, penalize_absolute: bool) -> f64 {
    match kind {
        ControlKind::U2 if !penalize_absolute => coupling,
        _ => 0.0,
    }
}

/// Evaluates `J_q` and `J_u` for aligned trajectories. `u2_reference` is the
/// level `u2` is penalized against.
pub fn cost(
    q_traj: &Trajectory,
    z_traj: &Trajectory,
    controls: &Controls,
    weights: &CostWeights,
    mode: ControlMode,
    u2_reference: f64,
) -> Result<CostBreakdown> {
    q_traj.same_shape(z_traj)?;
    q_traj.same_shape(&controls.u1)?;
    let time = q_traj.time();
    let grid = q_traj.grid();
    let n_t = time.n_t();

    let mut running = 0.0;
    for k in 0..time.n_rows() {
        let sq: f64 = q_traj
            .row(k)
            .iter()
            .zip(z_traj.row(k))
            .map(|(q, z)| (q - z) * (q - z))
            .sum();
        running += time.weight(k) * sq;
    }
    running *= grid.d_theta();
    let terminal: f64 = q_traj
        .row(n_t)
        .iter()
        .zip(z_traj.row(n_t))
        .map(|(q, z)| (q - z) * (q - z))
        .sum::<f64>()
        * grid.d_theta();
    let tracking = 0.5 * weights.alpha_r * running + 0.5 * weights.alpha_t * terminal;

    let mut energy = 0.0;
    for &kind in mode.active() {
        let reference = if kind == ControlKind::U2 { u2_reference } else { 0.0 };
        let dev = controls.get(kind).map(|v| v - reference);
        energy += 0.5 * weights.beta(kind) * dev.inner(&dev)?;
    }
    Ok(CostBreakdown {
        total: tracking + energy,
        tracking,
        energy,
    })
}

/// Reduced gradient, one space-time component per active control.
#[derive(Clone, Debug)]
pub struct ControlGradient {
    pub parts: Vec<(ControlKind, Trajectory)>,
}

impl ControlGradient {
    pub fn get(&self, kind: ControlKind) -> Option<&Trajectory> {
        self.parts.iter().find(|(k, _)| *k == kind).map(|(_, t)| t)
    }

    /// Sum of the per-control `L²(dθ dt)` inner products.
    pub fn inner(&self, other: &ControlGradient) -> Result<f64> {
        let mut acc = 0.0;
        for (kind, g) in &self.parts {
            let h = other.get(*kind).ok_or_else(|| {
                Error::ModeMismatch(format!("missing gradient component {}", kind.name()))
            })?;
            acc += g.inner(h)?;
        }
        Ok(acc)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).unwrap_or(f64::NAN).sqrt()
    }

    pub fn scale(&self, s: f64) -> ControlGradient {
        ControlGradient {
            parts: self.parts.iter().map(|(k, g)| (*k, g.map(|v| s * v))).collect(),
        }
    }

    /// `self + s · other`, componentwise.
    pub fn axpy(&self, s: f64, other: &ControlGradient) -> Result<ControlGradient> {
        let parts = self
            .parts
            .iter()
            .map(|(kind, g)| {
                let h = other.get(*kind).ok_or_else(|| {
                    Error::ModeMismatch(format!("missing component {}", kind.name()))
                })?;
                Ok((*kind, g.axpy(s, h)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ControlGradient { parts })
    }

    /// Applies `u ← u + s · self` to the matching controls.
    pub fn apply(&self, controls: &Controls, s: f64) -> Result<Controls> {
        let mut out = controls.clone();
        for (kind, d) in &self.parts {
            out.set(*kind, controls.get(*kind).axpy(s, d)?);
        }
        Ok(out)
    }
}

/// Pointwise reduced gradient for the active controls of `mode`, projected
/// onto the subspace of `shape`.
///
/// * `u1`: `β1 u1 + q p_θ`
/// * `u2`: `β2 (u2 − ū2) + w[q] q p_θ`
/// * source: `β_lin s + p`
#[allow(clippy::too_many_arguments)]
pub fn reduced_gradient(
    q_traj: &Trajectory,
    p_traj: &Trajectory,
    controls: &Controls,
    weights: &CostWeights,
    mode: ControlMode,
    shape: ControlShape,
    params: &CouplingParams,
    u2_reference: f64,
) -> Result<ControlGradient> {
    q_traj.same_shape(p_traj)?;
    q_traj.same_shape(&controls.u1)?;
    for &kind in mode.active() {
        if !shape.contains(controls.get(kind), SHAPE_TOL) {
            return Err(Error::ModeMismatch(format!(
                "control {} is not of shape {:?}",
                kind.name(),
                shape
            )));
        }
    }
    let grid = q_traj.grid();
    let time = q_traj.time();
    let n = grid.n_theta();

    // q p_θ and w[q] are shared by the u1 and u2 components
    let mut q_ptheta = Vec::with_capacity(n * time.n_rows());
    let mut wq = Vec::with_capacity(n * time.n_rows());
    for k in 0..time.n_rows() {
        let p_theta = grid.ddtheta_raw(p_traj.row(k));
        let q = q_traj.row(k);
        q_ptheta.extend(q.iter().zip(&p_theta).map(|(a, b)| a * b));
        wq.extend(w_raw(grid, q, params.alpha));
    }

    let mut parts = Vec::with_capacity(mode.active().len());
    for &kind in mode.active() {
        let beta = weights.beta(kind);
        let u = controls.get(kind).data();
        let data: Vec<f64> = match kind {
            ControlKind::U1 => (0..u.len()).map(|i| beta * u[i] + q_ptheta[i]).collect(),
            ControlKind::U2 => (0..u.len())
                .map(|i| beta * (u[i] - u2_reference) + wq[i] * q_ptheta[i])
                .collect(),
            ControlKind::Source => {
                let p = p_traj.data();
                (0..u.len()).map(|i| beta * u[i] + p[i]).collect()
            }
        };
        let g = Trajectory::new(grid, time, data)?;
        parts.push((kind, shape.project(&g)));
    }
    Ok(ControlGradient { parts })
}

/// One synchronization sample of a state trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncSample {
    pub t: f64,
    pub r: f64,
    pub psi: f64,
    pub mass: f64,
    /// `α_r/2 ∫ (q − z)² dθ` at this time.
    pub jq_running: f64,
}

/// Order parameter, mass and running tracking integrand along a trajectory.
///
/// `R e^{iψ}` is computed from the mass-normalized moments so that it stays
/// meaningful for source-controlled states whose mass drifts.
pub fn sync_series(q_traj: &Trajectory, z_traj: &Trajectory, alpha_r: f64) -> Result<Vec<SyncSample>> {
    q_traj.same_shape(z_traj)?;
    let grid = q_traj.grid();
    let time = q_traj.time();
    Ok((0..time.n_rows())
        .map(|k| {
            let q = q_traj.row(k);
            let mass = grid.integrate_raw(q);
            let (c, s) = moments_raw(grid, q);
            let polar = polar_from_moments(c / mass, s / mass);
            let sq: f64 = q
                .iter()
                .zip(z_traj.row(k))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            SyncSample {
                t: time.t(k),
                r: polar.r,
                psi: polar.psi,
                mass,
                jq_running: 0.5 * alpha_r * sq * grid.d_theta(),
            }
        })
        .collect())
}

/// `∫ (q(T) − z(T))² dθ`.
pub fn terminal_error(q_traj: &Trajectory, z_traj: &Trajectory) -> f64 {
    let n_t = q_traj.time().n_t();
    q_traj
        .row(n_t)
        .iter()
        .zip(z_traj.row(n_t))
        .map(|(q, z)| (q - z) * (q - z))
        .sum::<f64>()
        * q_traj.grid().d_theta()
}

/// First time at which `R(t) >= level`, if any.
pub fn crossing_time(series: &[SyncSample], level: f64) -> Option<f64> {
    series.iter().find(|s| s.r >= level).map(|s| s.t)
}

/// Result of a forward solve plus cost.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub state: Trajectory,
    pub cost: CostBreakdown,
}

/// A fully specified optimal control problem.
#[derive(Clone, Debug)]
pub struct OcpProblem {
    pub params: CouplingParams,
    pub time: TimeGrid,
    pub q0: Field,
    pub target: Trajectory,
    pub mode: ControlMode,
    pub shape: ControlShape,
    pub weights: CostWeights,
    /// Penalize `β2 u2²` instead of `β2 (u2 − K)²`.
    pub penalize_absolute: bool,
    pub solver: SolverOptions,
}

impl OcpProblem {
    pub fn grid(&self) -> &CircleGrid {
        self.q0.grid()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.weights.validate(self.mode)?;
        if self.target.grid() != self.grid() || self.target.time() != &self.time {
            return Err(Error::ShapeMismatch(
                "target trajectory does not match the problem grid".into(),
            ));
        }
        Ok(())
    }

    pub fn u2_reference(&self) -> f64 {
        energy_reference(ControlKind::U2, self.params.coupling, self.penalize_absolute)
    }

    pub fn baseline_controls(&self) -> Controls {
        Controls::baseline(self.grid(), &self.time, self.params.coupling)
    }

    pub fn evaluate(&self, controls: &Controls) -> Result<Evaluation> {
        let state = solve_state(&self.q0, controls, &self.params, &self.time, &self.solver)?;
        let cost = cost(
            &state,
            &self.target,
            controls,
            &self.weights,
            self.mode,
            self.u2_reference(),
        )?;
        Ok(Evaluation { state, cost })
    }

    pub fn adjoint(&self, state: &Trajectory, controls: &Controls) -> Result<Trajectory> {
        solve_adjoint(
            state,
            &self.target,
            controls,
            &self.params,
            self.weights.alpha_r,
            self.weights.alpha_t,
        )
    }

    pub fn gradient(
        &self,
        state: &Trajectory,
        adjoint: &Trajectory,
        controls: &Controls,
    ) -> Result<ControlGradient> {
        reduced_gradient(
            state,
            adjoint,
            controls,
            &self.weights,
            self.mode,
            self.shape,
            &self.params,
            self.u2_reference(),
        )
    }
}
