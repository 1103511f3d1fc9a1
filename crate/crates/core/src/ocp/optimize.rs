use serde::{Deserialize, Serialize};

use super::{sync_series, ControlGradient, CostBreakdown, Evaluation, OcpProblem, SyncSample};
use crate::dynamics::{Controls, Trajectory};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentDirection {
    #[default]
    SteepestDescent,
    /// Nonlinear conjugate gradient, Polak–Ribière+ with restarts.
    PolakRibiere,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub initial_step: f64,
    pub grad_tol: f64,
    pub cost_rel_tol: f64,
    pub max_backtracks: usize,
    pub direction: DescentDirection,
    /// Start each line search from twice the last accepted step (capped at
    /// `initial_step`) instead of from `initial_step`.
    pub warm_start: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            grad_tol: 1e-8,
            cost_rel_tol: 1e-10,
            max_backtracks: 30,
            direction: DescentDirection::SteepestDescent,
            warm_start: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.initial_step > 0.0
            && self.grad_tol > 0.0
            && self.cost_rel_tol > 0.0
            && self.max_backtracks > 0;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "invalid optimizer settings: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptStatus {
    /// Gradient norm fell below `grad_tol`.
    Converged,
    /// Relative cost decrease fell below `cost_rel_tol`.
    Stagnated,
    MaxIters,
    /// Line search failed, including the retry from `initial_step / 100`.
    Stalled,
}

impl OptStatus {
    pub fn name(self) -> &'static str {
        match self {
            OptStatus::Converged => "converged",
            OptStatus::Stagnated => "stagnated",
            OptStatus::MaxIters => "max_iters",
            OptStatus::Stalled => "stalled",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub cost: f64,
    pub tracking: f64,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub backtracks: usize,
}

#[derive(Clone, Debug)]
pub struct OptResult {
    pub status: OptStatus,
    pub iterates: Vec<IterRecord>,
    pub controls: Controls,
    pub gradient: ControlGradient,
    pub state: Trajectory,
    pub adjoint: Trajectory,
    pub sync: Vec<SyncSample>,
    /// Number of forward solves, including rejected line-search trials.
    pub state_solves: usize,
}

impl OptResult {
    pub fn final_cost(&self) -> CostBreakdown {
        let last = self.iterates.last().expect("at least the initial record");
        CostBreakdown {
            total: last.cost,
            tracking: last.tracking,
            energy: last.energy,
        }
    }
}

struct LineSearchOutcome {
    controls: Controls,
    eval: Evaluation,
    step: f64,
    backtracks: usize,
}

/// Backtracking from `start`; a failed forward solve (CFL, divergence)
/// counts as a rejected trial.
#[allow(clippy::too_many_arguments)]
fn backtrack(
    problem: &OcpProblem,
    controls: &Controls,
    direction: &ControlGradient,
    slope: f64,
    current: f64,
    start: f64,
    cfg: &OptimizerConfig,
    solves: &mut usize,
    backtracks: &mut usize,
    observer: &mut dyn FnMut(&Evaluation),
) -> Result<Option<LineSearchOutcome>> {
    let mut step = start;
    for _ in 0..=cfg.max_backtracks {
        let trial = direction.apply(controls, step)?;
        *solves += 1;
        match problem.evaluate(&trial) {
            Ok(eval) => {
                observer(&eval);
                let j = eval.cost.total;
                if j < current && j <= current + cfg.armijo_c * step * slope {
                    return Ok(Some(LineSearchOutcome {
                        controls: trial,
                        eval,
                        step,
                        backtracks: *backtracks,
                    }));
                }
            }
            Err(Error::Cfl { .. }) | Err(Error::Diverged { .. }) => {}
            Err(e) => return Err(e),
        }
        step *= cfg.backtrack_factor;
        *backtracks += 1;
    }
    Ok(None)
}

/// Projected gradient descent with Armijo backtracking on the reduced cost.
pub fn optimize(problem: &OcpProblem, initial: Controls, cfg: &OptimizerConfig) -> Result<OptResult> {
    optimize_observed(problem, initial, cfg, &mut |_| {})
}

/// [`optimize`], calling `observer` after every successful forward solve,
/// including rejected line-search trials.
pub fn optimize_observed(
    problem: &OcpProblem,
    initial: Controls,
    cfg: &OptimizerConfig,
    observer: &mut dyn FnMut(&Evaluation),
) -> Result<OptResult> {
    problem.validate()?;
    cfg.validate()?;

    let mut controls = initial;
    for &kind in problem.mode.active() {
        let projected = problem.shape.project(controls.get(kind));
        controls.set(kind, projected);
    }

    let mut solves = 1;
    let mut eval = problem.evaluate(&controls)?;
    observer(&eval);
    let mut adjoint = problem.adjoint(&eval.state, &controls)?;
    let mut grad = problem.gradient(&eval.state, &adjoint, &controls)?;
    let mut grad_norm = grad.norm();
    let mut iterates = vec![IterRecord {
        iter: 0,
        cost: eval.cost.total,
        tracking: eval.cost.tracking,
        energy: eval.cost.energy,
        grad_norm,
        step: 0.0,
        backtracks: 0,
    }];

    let mut status = OptStatus::MaxIters;
    let mut direction = grad.scale(-1.0);
    let mut last_step: Option<f64> = None;

    if grad_norm <= cfg.grad_tol {
        status = OptStatus::Converged;
    } else {
        for iter in 1..=cfg.max_iters {
            let mut slope = grad.inner(&direction)?;
            if !(slope < 0.0) {
                direction = grad.scale(-1.0);
                slope = -grad_norm * grad_norm;
            }
            let start = match (cfg.warm_start, last_step) {
                (true, Some(s)) => (2.0 * s).min(cfg.initial_step),
                _ => cfg.initial_step,
            };
            let mut backtracks = 0;
            let current = eval.cost.total;
            let mut outcome = backtrack(
                problem,
                &controls,
                &direction,
                slope,
                current,
                start,
                cfg,
                &mut solves,
                &mut backtracks,
                observer,
            )?;
            if outcome.is_none() {
                outcome = backtrack(
                    problem,
                    &controls,
                    &direction,
                    slope,
                    current,
                    start / 100.0,
                    cfg,
                    &mut solves,
                    &mut backtracks,
                    observer,
                )?;
            }
            let Some(accepted) = outcome else {
                status = OptStatus::Stalled;
                break;
            };

            let previous = eval.cost.total;
            controls = accepted.controls;
            eval = accepted.eval;
            last_step = Some(accepted.step);
            adjoint = problem.adjoint(&eval.state, &controls)?;
            let new_grad = problem.gradient(&eval.state, &adjoint, &controls)?;
            grad_norm = new_grad.norm();
            iterates.push(IterRecord {
                iter,
                cost: eval.cost.total,
                tracking: eval.cost.tracking,
                energy: eval.cost.energy,
                grad_norm,
                step: accepted.step,
                backtracks: accepted.backtracks,
            });

            direction = match cfg.direction {
                DescentDirection::SteepestDescent => new_grad.scale(-1.0),
                DescentDirection::PolakRibiere => {
                    let old_sq = grad.inner(&grad)?;
                    let diff = new_grad.axpy(-1.0, &grad)?;
                    let beta = (new_grad.inner(&diff)? / old_sq).max(0.0);
                    new_grad.scale(-1.0).axpy(beta, &direction)?
                }
            };
            grad = new_grad;

            if grad_norm <= cfg.grad_tol {
                status = OptStatus::Converged;
                break;
            }
            if (previous - eval.cost.total) <= cfg.cost_rel_tol * previous.abs() {
                status = OptStatus::Stagnated;
                break;
            }
        }
    }

    let sync = sync_series(&eval.state, &problem.target, problem.weights.alpha_r)?;
    Ok(OptResult {
        status,
        iterates,
        controls,
        gradient: grad,
        state: eval.state,
        adjoint,
        sync,
        state_solves: solves,
    })
}
