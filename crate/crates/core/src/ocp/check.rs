//! Adjoint gradient verification against central finite differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ControlGradient, OcpProblem};
use crate::dynamics::{Controls, Trajectory};
use crate::error::Result;
use crate::oracles::random_band_limited_trajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientCheckOptions {
    pub directions: usize,
    pub eps_sweep: Vec<f64>,
    /// Pass threshold on the best relative error of each direction.
    pub tolerance: f64,
    pub seed: u64,
    /// Test hook: constant added to every adjoint gradient component.
    pub gradient_bias: f64,
}

impl Default for GradientCheckOptions {
    fn default() -> Self {
        Self {
            directions: 5,
            eps_sweep: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            tolerance: 1e-3,
            seed: 7,
            gradient_bias: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdSample {
    pub eps: f64,
    pub fd: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub adjoint: f64,
    pub samples: Vec<FdSample>,
    pub min_rel_err: f64,
    pub v_shaped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub mode: String,
    pub directions: Vec<DirectionReport>,
    /// Largest of the per-direction minimum relative errors.
    pub worst_min_rel_err: f64,
    pub passed: bool,
}

/// True when the error curve (ordered by decreasing ε) falls to its minimum
/// and then does not fall again, up to a factor-two noise band.
fn is_v_shaped(errs: &[f64]) -> bool {
    let Some(argmin) = errs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
    else {
        return false;
    };
    let descending = errs[..=argmin].windows(2).all(|w| w[0] >= 0.5 * w[1]);
    let ascending = errs[argmin..].windows(2).all(|w| w[1] >= 0.5 * w[0]);
    descending && ascending
}

fn random_direction(problem: &OcpProblem, rng: &mut ChaCha8Rng) -> ControlGradient {
    let parts = problem
        .mode
        .active()
        .iter()
        .map(|&kind| {
            let raw = random_band_limited_trajectory(problem.grid(), &problem.time, 3, 2, rng);
            (kind, problem.shape.project(&raw))
        })
        .collect();
    let d = ControlGradient { parts };
    let norm = d.norm();
    d.scale(1.0 / norm)
}

fn relative_error(adjoint: f64, fd: f64) -> f64 {
    (adjoint - fd).abs() / adjoint.abs().max(fd.abs()).max(1e-300)
}

/// Compares `⟨∇J, δ⟩` from the adjoint with `(J(u + εδ) − J(u − εδ)) / 2ε`
/// along random band-limited directions `δ`.
pub fn gradient_check(
    problem: &OcpProblem,
    base: &Controls,
    opts: &GradientCheckOptions,
) -> Result<GradientCheckReport> {
    problem.validate()?;
    let eval = problem.evaluate(base)?;
    let adjoint = problem.adjoint(&eval.state, base)?;
    let mut grad = problem.gradient(&eval.state, &adjoint, base)?;
    if opts.gradient_bias != 0.0 {
        grad = ControlGradient {
            parts: grad
                .parts
                .iter()
                .map(|(k, g)| (*k, g.map(|v| v + opts.gradient_bias)))
                .collect(),
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let directions: Vec<ControlGradient> = (0..opts.directions)
        .map(|_| random_direction(problem, &mut rng))
        .collect();

    let reports = directions
        .par_iter()
        .map(|dir| -> Result<DirectionReport> {
            let adj = grad.inner(dir)?;
            let samples = opts
                .eps_sweep
                .iter()
                .map(|&eps| -> Result<FdSample> {
                    let plus = problem.evaluate(&dir.apply(base, eps)?)?.cost.total;
                    let minus = problem.evaluate(&dir.apply(base, -eps)?)?.cost.total;
                    let fd = (plus - minus) / (2.0 * eps);
                    Ok(FdSample {
                        eps,
                        fd,
                        rel_err: relative_error(adj, fd),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let errs: Vec<f64> = samples.iter().map(|s| s.rel_err).collect();
            let min_rel_err = errs.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(DirectionReport {
                adjoint: adj,
                v_shaped: is_v_shaped(&errs),
                samples,
                min_rel_err,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let worst = reports
        .iter()
        .map(|r| r.min_rel_err)
        .fold(0.0, f64::max);
    let passed = !reports.is_empty()
        && reports
            .iter()
            .all(|r| r.min_rel_err <= opts.tolerance && r.v_shaped);
    Ok(GradientCheckReport {
        mode: problem.mode.name().to_string(),
        directions: reports,
        worst_min_rel_err: worst,
        passed,
    })
}

/// Baseline controls plus a smooth random perturbation of the active ones,
/// so that every term of the gradient is exercised.
pub fn perturbed_controls(problem: &OcpProblem, amplitude: f64, seed: u64) -> Controls {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = problem.baseline_controls();
    for &kind in problem.mode.active() {
        let delta: Trajectory = random_band_limited_trajectory(problem.grid(), &problem.time, 3, 2, &mut rng);
        let delta = problem.shape.project(&delta);
        let scale = amplitude / delta.max_abs().max(1e-300);
        let value = u.get(kind).axpy(scale, &delta).expect("same shape");
        u.set(kind, value);
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn v_shape_detection() {
        assert!(is_v_shaped(&[1e-1, 1e-3, 1e-5, 1e-5, 1e-4]));
        assert!(is_v_shaped(&[1e-1, 1e-3, 1e-5, 1.1e-5, 0.9e-5]));
        assert!(!is_v_shaped(&[1e-1, 1e-5, 1e-3, 1e-6]));
        assert!(is_v_shaped(&[0.5, 0.5, 0.5]));
    }

    #[test]
    fn relative_error_symmetric() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }
}
