//! Batch commands behind the command-line tool.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Discretization, RunConfig};
use crate::coupling::{order_parameter, w_of, w_star_of, CouplingParams};
use crate::dynamics::{ControlMode, Controls, SolverOptions, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{CircleGrid, Field};
use crate::io::{convergence_csv, timeseries_csv, write_bytes, write_field, write_json, write_trajectory};
use crate::ocp::{
    crossing_time, gradient_check, optimize, perturbed_controls, sync_series, terminal_error,
    CostBreakdown, GradientCheckReport, OcpProblem, OptStatus, SyncSample,
};
use crate::oracles::{random_band_limited_field, w_quadrature, w_star_quadrature};

/// Fraction of the target coherence used for synchronization crossing times.
pub const CROSSING_FRACTION: f64 = 0.9;

/// How a command finished, mapped to the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ChecksFailed,
    Stalled,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::ChecksFailed => 2,
            Outcome::Stalled => 3,
        }
    }
}

/// Scalar diagnostics of one state trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub final_r: f64,
    pub final_psi: f64,
    /// `∫ (q(T) − z(T))² dθ`.
    pub terminal_error: f64,
    pub cost: CostBreakdown,
    /// First time `R(t) ≥ CROSSING_FRACTION · R_target`.
    pub crossing_time: Option<f64>,
    pub max_mass_error: f64,
    pub min_density: f64,
    pub max_transport: f64,
}

fn metrics(
    problem: &OcpProblem,
    state: &Trajectory,
    series: &[SyncSample],
    cost: CostBreakdown,
    level: f64,
) -> RunMetrics {
    let last = series.last().expect("at least one row");
    let max_transport = (0..state.n_rows())
        .map(|k| w_of(&state.row_field(k), problem.params.alpha).max_abs())
        .fold(0.0, f64::max);
    RunMetrics {
        final_r: last.r,
        final_psi: last.psi,
        terminal_error: terminal_error(state, &problem.target),
        cost,
        crossing_time: crossing_time(series, level),
        max_mass_error: series
            .iter()
            .map(|s| (s.mass - 1.0).abs())
            .fold(0.0, f64::max),
        min_density: state.min(),
        max_transport,
    }
}

/// Coherence of the terminal target density.
pub fn target_coherence(problem: &OcpProblem) -> Result<f64> {
    Ok(order_parameter(&problem.target.last_field())?.r)
}

fn prepare_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn discretization_of(problem: &OcpProblem) -> Discretization {
    Discretization {
        n_theta: problem.grid().n_theta(),
        n_t: problem.time.n_t(),
        t_final: problem.time.t_final(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub command: String,
    pub discretization: Discretization,
    pub r_target: f64,
    pub crossing_level: f64,
    pub metrics: RunMetrics,
}

fn write_state_outputs(dir: &Path, series: &[SyncSample], state: &Trajectory) -> Result<()> {
    write_bytes(&dir.join("timeseries.csv"), timeseries_csv(series).as_bytes())?;
    write_trajectory(&dir.join("state"), "q", "1/rad", state)
}

/// Forward solve with the configured starting controls (the uncontrolled
/// dynamics unless initial controls are given).
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateSummary> {
    let problem = cfg.problem()?;
    let controls = cfg.initial_controls(&problem)?;
    let eval = problem.evaluate(&controls)?;
    let series = sync_series(&eval.state, &problem.target, problem.weights.alpha_r)?;
    let r_target = target_coherence(&problem)?;
    let level = CROSSING_FRACTION * r_target;

    let dir = &cfg.output_dir;
    prepare_output(dir)?;
    write_state_outputs(dir, &series, &eval.state)?;
    let summary = SimulateSummary {
        command: "simulate".into(),
        discretization: discretization_of(&problem),
        r_target,
        crossing_level: level,
        metrics: metrics(&problem, &eval.state, &series, eval.cost, level),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSummary {
    pub command: String,
    pub mode: ControlMode,
    pub status: String,
    pub iterations: usize,
    pub state_solves: usize,
    pub discretization: Discretization,
    pub initial_cost: CostBreakdown,
    pub final_grad_norm: f64,
    pub r_target: f64,
    pub crossing_level: f64,
    pub controlled: RunMetrics,
    pub uncontrolled: RunMetrics,
    /// Controlled over uncontrolled terminal error.
    pub terminal_error_ratio: f64,
}

pub fn cmd_optimize(cfg: &RunConfig) -> Result<(OptimizeSummary, Outcome)> {
    let problem = cfg.problem()?;
    let initial = cfg.initial_controls(&problem)?;
    let r_target = target_coherence(&problem)?;
    let level = CROSSING_FRACTION * r_target;

    let baseline = problem.evaluate(&problem.baseline_controls())?;
    let baseline_series = sync_series(&baseline.state, &problem.target, problem.weights.alpha_r)?;
    let uncontrolled = metrics(&problem, &baseline.state, &baseline_series, baseline.cost, level);

    let res = optimize(&problem, initial, &cfg.optimizer)?;
    let final_cost = res.final_cost();
    let controlled = metrics(&problem, &res.state, &res.sync, final_cost, level);

    let dir = &cfg.output_dir;
    prepare_output(dir)?;
    write_state_outputs(dir, &res.sync, &res.state)?;
    write_bytes(
        &dir.join("uncontrolled_timeseries.csv"),
        timeseries_csv(&baseline_series).as_bytes(),
    )?;
    write_bytes(&dir.join("convergence.csv"), convergence_csv(&res.iterates).as_bytes())?;
    write_trajectory(&dir.join("adjoint"), "p", "1/rad", &res.adjoint)?;
    write_trajectory(&dir.join("uncontrolled_state"), "q", "1/rad", &baseline.state)?;
    write_field(&dir.join("target"), "z", "1/rad", &problem.target.last_field())?;
    for &kind in problem.mode.active() {
        write_trajectory(&dir.join(kind.name()), kind.name(), kind.units(), res.controls.get(kind))?;
    }

    let outcome = if res.status == OptStatus::Stalled {
        Outcome::Stalled
    } else {
        Outcome::Success
    };
    let summary = OptimizeSummary {
        command: "optimize".into(),
        mode: problem.mode,
        status: res.status.name().into(),
        iterations: res.iterates.len() - 1,
        state_solves: res.state_solves,
        discretization: discretization_of(&problem),
        initial_cost: CostBreakdown {
            total: res.iterates[0].cost,
            tracking: res.iterates[0].tracking,
            energy: res.iterates[0].energy,
        },
        final_grad_norm: res.iterates.last().map(|r| r.grad_norm).unwrap_or(f64::NAN),
        r_target,
        crossing_level: level,
        terminal_error_ratio: controlled.terminal_error / uncontrolled.terminal_error,
        controlled,
        uncontrolled,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok((summary, outcome))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckItem {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub passed: bool,
    pub checks: Vec<CheckItem>,
    pub gradient: Vec<GradientCheckReport>,
}

/// Grid sizes used by the spectral identity checks.
pub const IDENTITY_GRIDS: [usize; 3] = [16, 64, 128];

/// Worst violations of the Green identity, `w`/`w*` duality and quadrature
/// equivalence over `samples` random field pairs per grid.
pub fn spectral_identities(samples: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut green, mut duality, mut quad) = (0.0f64, 0.0f64, 0.0f64);
    for n in IDENTITY_GRIDS {
        let grid = CircleGrid::new(n)?;
        let modes = (n / 2 - 1).min(8);
        for i in 0..samples {
            let f = random_band_limited_field(&grid, modes, &mut rng);
            let g = random_band_limited_field(&grid, modes, &mut rng);
            let fg = grid.integrate(&grid.ddtheta(&f)?.mul(&g)?)?;
            let gf = grid.integrate(&f.mul(&grid.ddtheta(&g)?)?)?;
            green = green.max((fg + gf).abs());
            let alpha = 0.37 * i as f64;
            let lhs = grid.integrate(&w_of(&f, alpha).mul(&g)?)?;
            let rhs = grid.integrate(&w_star_of(&g, alpha).mul(&f)?)?;
            duality = duality.max((lhs - rhs).abs());
            let dw = w_of(&f, alpha).sub(&w_quadrature(&f, alpha))?.max_abs();
            let dws = w_star_of(&g, alpha).sub(&w_star_quadrature(&g, alpha))?.max_abs();
            quad = quad.max(dw).max(dws);
        }
    }
    Ok((green, duality, quad))
}

/// Max error at `t = T` of the transport-free solve of `(1 + cos θ)/2π`
/// against `(1 + e^{−DT} cos θ)/2π`.
pub fn heat_error(n_theta: usize, t_final: f64, n_t: usize, diffusion: f64) -> Result<f64> {
    let grid = CircleGrid::new(n_theta)?;
    let time = TimeGrid::new(t_final, n_t)?;
    let params = CouplingParams {
        alpha: 0.0,
        diffusion,
        coupling: 0.0,
    };
    let q0 = Field::from_fn(&grid, |t| (1.0 + t.cos()) / (2.0 * std::f64::consts::PI))?;
    let controls = Controls::baseline(&grid, &time, 0.0);
    let q = crate::dynamics::solve_state(&q0, &controls, &params, &time, &SolverOptions::default())?;
    let decay = (-diffusion * t_final).exp();
    let exact = Field::from_fn(&grid, |t| (1.0 + decay * t.cos()) / (2.0 * std::f64::consts::PI))?;
    Ok(q.last_field().sub(&exact)?.max_abs())
}

pub fn cmd_check(cfg: &RunConfig) -> Result<(CheckReport, Outcome)> {
    cfg.validate()?;
    let check = &cfg.check;
    let mut checks = Vec::new();

    let (green, duality, quad) = spectral_identities(check.identity_samples, cfg.seed)?;
    checks.push(CheckItem::at_most("green_identity", green, 1e-10));
    checks.push(CheckItem::at_most("duality", duality, 1e-12));
    checks.push(CheckItem::at_most("quadrature_equivalence", quad, 1e-12));

    let d = &check.discretization;
    checks.push(CheckItem::at_most(
        "heat_exactness",
        heat_error(d.n_theta, d.t_final, d.n_t, cfg.physics.diffusion)?,
        1e-8,
    ));

    let joint = cfg.problem_on(d, ControlMode::Joint)?;
    let u = perturbed_controls(&joint, check.perturbation.max(0.1), cfg.seed);
    let eval = joint.evaluate(&u)?;
    let series = sync_series(&eval.state, &joint.target, joint.weights.alpha_r)?;
    let m = metrics(&joint, &eval.state, &series, eval.cost, 1.0);
    checks.push(CheckItem::at_most("mass_conservation", m.max_mass_error, 1e-8));
    checks.push(CheckItem::at_most("transport_bound", m.max_transport, 1.0 + 1e-6));

    let mut gradient = Vec::new();
    for &mode in &check.modes {
        let problem = cfg.problem_on(d, mode)?;
        let base = perturbed_controls(&problem, check.perturbation, cfg.seed);
        let report = gradient_check(&problem, &base, &check.gradient)?;
        checks.push(CheckItem {
            name: format!("gradient_{}", mode.name()),
            value: report.worst_min_rel_err,
            tolerance: check.gradient.tolerance,
            passed: report.passed,
        });
        gradient.push(report);
    }

    let passed = checks.iter().all(|c| c.passed);
    let report = CheckReport {
        passed,
        checks,
        gradient,
    };
    prepare_output(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("report.json"), &report)?;
    let outcome = if passed {
        Outcome::Success
    } else {
        Outcome::ChecksFailed
    };
    Ok((report, outcome))
}
