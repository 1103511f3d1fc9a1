//! Run configuration.
//!
//! A run is described by one JSON document. Every key has a default, so an
//! empty object `{}` is a valid config; files and `--set a.b=value` overrides
//! are merged on top of the defaults before deserialization.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coupling::CouplingParams;
use crate::density::{gaussian_mixture, uniform, von_mises, wrapped_gaussian, MixtureComponent};
use crate::dynamics::{ControlKind, ControlMode, ControlShape, Controls, SolverOptions, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{CircleGrid, Field};
use crate::io::{read_field, read_trajectory};
use crate::ocp::{perturbed_controls, CostWeights, GradientCheckOptions, OcpProblem, OptimizerConfig};

/// Tolerance on the negative part of a loaded density.
const DENSITY_NEGATIVITY_TOL: f64 = -1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform,
    WrappedGaussian { mean: f64, sigma: f64 },
    Mixture { components: Vec<MixtureComponent> },
    VonMises { mean: f64, kappa: f64 },
    /// A field file; `row` defaults to the last stored row.
    FromFile {
        path: PathBuf,
        #[serde(default)]
        row: Option<usize>,
    },
}

impl DensitySpec {
    /// Builds the density on `grid` and normalizes it. Relative paths are
    /// resolved against `base`.
    pub fn build(&self, grid: &CircleGrid, base: &Path) -> Result<Field> {
        let f = match self {
            DensitySpec::Uniform => uniform(grid),
            DensitySpec::WrappedGaussian { mean, sigma } => wrapped_gaussian(grid, *mean, *sigma)?,
            DensitySpec::Mixture { components } => gaussian_mixture(grid, components)?,
            DensitySpec::VonMises { mean, kappa } => von_mises(grid, *mean, *kappa)?,
            DensitySpec::FromFile { path, row } => {
                let f = read_field(&base.join(path), grid, *row)?;
                if f.min() < DENSITY_NEGATIVITY_TOL {
                    return Err(Error::NegativeDensity { min: f.min() });
                }
                f
            }
        };
        f.normalized()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Discretization {
    pub n_theta: usize,
    pub n_t: usize,
    #[serde(rename = "T")]
    pub t_final: f64,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            n_theta: 128,
            n_t: 2000,
            t_final: 10.0,
        }
    }
}

/// Optional starting controls read from field files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialControls {
    pub u1: Option<PathBuf>,
    pub u2: Option<PathBuf>,
    pub source: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub mode: ControlMode,
    pub shape: ControlShape,
    /// Penalize `u2` itself rather than its deviation from `K`.
    pub penalize_absolute: bool,
    pub initial: InitialControls,
    /// Peak amplitude of a smooth seeded perturbation added to the active
    /// starting controls; zero disables it.
    pub perturbation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub initial: DensitySpec,
    /// Static target, replicated over time.
    pub target: DensitySpec,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            initial: DensitySpec::WrappedGaussian {
                mean: PI / 2.0,
                sigma: 0.8,
            },
            target: DensitySpec::WrappedGaussian {
                mean: 1.5 * PI,
                sigma: 0.4,
            },
        }
    }
}

/// Settings of the `check` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub discretization: Discretization,
    pub modes: Vec<ControlMode>,
    /// Amplitude of the perturbation applied to the baseline controls before
    /// checking, so every gradient term is exercised.
    pub perturbation: f64,
    pub gradient: GradientCheckOptions,
    /// Random field pairs per spectral identity check.
    pub identity_samples: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            discretization: Discretization {
                n_theta: 64,
                n_t: 200,
                t_final: 1.0,
            },
            modes: vec![
                ControlMode::Velocity,
                ControlMode::Interaction,
                ControlMode::LinearSource,
            ],
            perturbation: 0.2,
            gradient: GradientCheckOptions::default(),
            identity_samples: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub physics: CouplingParams,
    pub discretization: Discretization,
    pub control: ControlConfig,
    pub weights: CostWeights,
    pub optimizer: OptimizerConfig,
    pub scenario: Scenario,
    pub solver: SolverOptions,
    pub check: CheckConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Directory relative input paths are resolved against. Set by the loader
    /// to the config file's directory.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            physics: CouplingParams::default(),
            discretization: Discretization::default(),
            control: ControlConfig::default(),
            weights: CostWeights::default(),
            optimizer: OptimizerConfig::default(),
            scenario: Scenario::default(),
            solver: SolverOptions::default(),
            check: CheckConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Deep merge of JSON objects. A patch object carrying a `kind` tag replaces
/// the slot instead, so switching a density variant drops stale fields.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && v.get("kind").is_none() => {
                        merge(slot, v)
                    }
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Parses `a.b.c=value`. The value is read as JSON when possible and as a
/// plain string otherwise.
pub fn parse_override(spec: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override `{spec}` has an empty key segment")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path, value))
}

fn set_path(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut cur = root;
    for (i, seg) in path.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| {
            Error::Config(format!("`{}` is not a section", path[..i].join(".")))
        })?;
        if i + 1 == path.len() {
            obj.insert(seg.clone(), value);
            return Ok(());
        }
        cur = obj
            .entry(seg.clone())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

impl RunConfig {
    /// Defaults, then `document`, then each override in order.
    pub fn from_value(document: Value, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(RunConfig::default())?;
        if !document.is_object() {
            return Err(Error::Config("config document must be a JSON object".into()));
        }
        merge(&mut v, document);
        for o in overrides {
            let (path, value) = parse_override(o)?;
            set_path(&mut v, &path, value)?;
        }
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let (document, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let doc: Value = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (doc, base)
            }
            None => (Value::Object(Default::default()), PathBuf::from(".")),
        };
        let mut cfg = Self::from_value(document, overrides)?;
        cfg.base_dir = if base.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            base
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        self.weights.validate(self.control.mode)?;
        if !(self.weights.alpha_r > 0.0 || self.weights.alpha_t > 0.0) {
            return Err(Error::Config(
                "at least one of weights.alpha_r, weights.alpha_t must be > 0".into(),
            ));
        }
        self.optimizer.validate()?;
        if !(self.control.perturbation >= 0.0) {
            return Err(Error::Config("control.perturbation must be >= 0".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<CircleGrid> {
        CircleGrid::new(self.discretization.n_theta)
    }

    pub fn time(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.discretization.t_final, self.discretization.n_t)
    }

    /// Problem on the main discretization.
    pub fn problem(&self) -> Result<OcpProblem> {
        self.validate()?;
        self.problem_on(&self.discretization, self.control.mode)
    }

    /// Same physics and scenario on another discretization and mode.
    pub fn problem_on(&self, disc: &Discretization, mode: ControlMode) -> Result<OcpProblem> {
        let grid = CircleGrid::new(disc.n_theta)?;
        let time = TimeGrid::new(disc.t_final, disc.n_t)?;
        let q0 = self.scenario.initial.build(&grid, &self.base_dir)?;
        let z = self.scenario.target.build(&grid, &self.base_dir)?;
        let problem = OcpProblem {
            params: self.physics,
            time,
            q0,
            target: Trajectory::replicate(&z, &time),
            mode,
            shape: self.control.shape,
            weights: self.weights,
            penalize_absolute: self.control.penalize_absolute,
            solver: self.solver,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Starting controls: baseline, overridden by any initial-control files,
    /// then perturbed if requested. Active controls are projected onto the
    /// configured shape.
    pub fn initial_controls(&self, problem: &OcpProblem) -> Result<Controls> {
        let mut u = if self.control.perturbation > 0.0 {
            perturbed_controls(problem, self.control.perturbation, self.seed)
        } else {
            problem.baseline_controls()
        };
        let files = [
            (ControlKind::U1, &self.control.initial.u1),
            (ControlKind::U2, &self.control.initial.u2),
            (ControlKind::Source, &self.control.initial.source),
        ];
        for (kind, file) in files {
            if let Some(path) = file {
                let loaded = read_trajectory(&self.base_dir.join(path), problem.grid(), &problem.time)?;
                let base = problem.baseline_controls();
                let delta = u.get(kind).axpy(-1.0, base.get(kind))?;
                u.set(kind, loaded.axpy(1.0, &delta)?);
            }
        }
        for &kind in problem.mode.active() {
            let projected = problem.shape.project(u.get(kind));
            u.set(kind, projected);
        }
        Ok(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_value(serde_json::json!({}), &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides_apply_in_order() {
        let cfg = RunConfig::from_value(
            serde_json::json!({"physics": {"d": 0.5}}),
            &[
                "discretization.n_t=400".into(),
                "control.mode=interaction".into(),
                "physics.d=0.3".into(),
                "scenario.target={\"kind\":\"uniform\"}".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.discretization.n_t, 400);
        assert_eq!(cfg.control.mode, ControlMode::Interaction);
        assert_eq!(cfg.physics.diffusion, 0.3);
        assert_eq!(cfg.physics.coupling, 1.0);
        assert_eq!(cfg.scenario.target, DensitySpec::Uniform);

        let cfg = RunConfig::from_value(
            serde_json::json!({"scenario": {"initial": {"kind": "uniform"}}}),
            &["scenario.target.sigma=0.3".into()],
        )
        .unwrap();
        assert_eq!(cfg.scenario.initial, DensitySpec::Uniform);
        assert_eq!(
            cfg.scenario.target,
            DensitySpec::WrappedGaussian { mean: 1.5 * PI, sigma: 0.3 }
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_value(serde_json::json!({"phisics": {}}), &[]).is_err());
        assert!(RunConfig::from_value(serde_json::json!({}), &["physics.dd=1".into()]).is_err());
        for key in ["optimizer.max_iter=5", "solver.dealiase=true", "check.gradient.eps=1"] {
            assert!(RunConfig::from_value(serde_json::json!({}), &[key.into()]).is_err(), "{key}");
        }
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("a..b=1").is_err());
    }

    #[test]
    fn tracking_weight_required() {
        let cfg = RunConfig::from_value(
            serde_json::json!({"weights": {"alpha_r": 0.0, "alpha_t": 0.0}}),
            &[],
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn default_scenario_builds() {
        let cfg = RunConfig::default();
        let p = cfg.problem().unwrap();
        assert_eq!(p.grid().n_theta(), 128);
        assert!((p.q0.integral() - 1.0).abs() < 1e-12);
        let u = cfg.initial_controls(&p).unwrap();
        assert_eq!(u.u2.max_abs(), 1.0);
    }
}
