use std::f64::consts::PI;

use kuramoto_ocp::density::wrapped_gaussian;
use kuramoto_ocp::ocp::{
    cost, gradient_check, optimize, perturbed_controls, GradientCheckOptions, OptimizerConfig,
};
use kuramoto_ocp::{
    CircleGrid, ControlKind, ControlMode, ControlShape, CostWeights, CouplingParams, OcpProblem,
    SolverOptions, TimeGrid, Trajectory,
};

fn coarse_problem(mode: ControlMode, n_t: usize) -> OcpProblem {
    let grid = CircleGrid::new(64).unwrap();
    let time = TimeGrid::new(1.0, n_t).unwrap();
    let z = wrapped_gaussian(&grid, 1.5 * PI, 0.4).unwrap();
    OcpProblem {
        params: CouplingParams::default(),
        time,
        q0: wrapped_gaussian(&grid, PI / 2.0, 0.8).unwrap(),
        target: Trajectory::replicate(&z, &time),
        mode,
        shape: ControlShape::SpaceTime,
        weights: CostWeights::default(),
        penalize_absolute: false,
        solver: SolverOptions::default(),
    }
}

fn check(problem: &OcpProblem, seed: u64) -> kuramoto_ocp::ocp::GradientCheckReport {
    let base = perturbed_controls(problem, 0.2, seed);
    gradient_check(problem, &base, &GradientCheckOptions::default()).unwrap()
}

#[test]
fn adjoint_gradient_matches_finite_differences_in_every_mode() {
    for mode in [
        ControlMode::Velocity,
        ControlMode::Interaction,
        ControlMode::LinearSource,
        ControlMode::Joint,
    ] {
        let report = check(&coarse_problem(mode, 200), 1);
        assert_eq!(report.directions.len(), 5);
        for d in &report.directions {
            assert!(d.min_rel_err <= 1e-3, "{mode:?}: {d:?}");
            assert!(d.v_shaped, "{mode:?}: {d:?}");
        }
        assert!(report.passed);
    }
}

#[test]
fn phase_lag_and_absolute_penalty_keep_gradients_consistent() {
    let mut p = coarse_problem(ControlMode::Joint, 200);
    p.params.alpha = 0.8;
    p.penalize_absolute = true;
    assert!(check(&p, 4).passed);
}

#[test]
fn restricted_shapes_have_consistent_gradients() {
    for shape in [ControlShape::SpaceOnly, ControlShape::TimeOnly, ControlShape::Constant] {
        for mode in [ControlMode::Velocity, ControlMode::Interaction] {
            let mut p = coarse_problem(mode, 200);
            p.shape = shape;
            let report = check(&p, 2);
            assert!(report.passed, "{shape:?} {mode:?}: {report:?}");
        }
    }
}

#[test]
fn quadratic_only_cost_is_differentiated_exactly() {
    for mode in [ControlMode::Velocity, ControlMode::Interaction, ControlMode::LinearSource] {
        let mut p = coarse_problem(mode, 200);
        p.weights.alpha_r = 0.0;
        p.weights.alpha_t = 0.0;
        let report = check(&p, 5);
        assert!(report.worst_min_rel_err <= 1e-10, "{mode:?}: {}", report.worst_min_rel_err);
    }
}

#[test]
fn gradient_error_floor_shrinks_with_time_refinement() {
    for mode in [ControlMode::Velocity, ControlMode::Interaction, ControlMode::LinearSource] {
        let coarse = check(&coarse_problem(mode, 200), 1).worst_min_rel_err;
        let fine = check(&coarse_problem(mode, 400), 1).worst_min_rel_err;
        assert!(fine < coarse, "{mode:?}: {coarse} -> {fine}");
    }
}

#[test]
fn biased_gradient_fails_the_check() {
    let p = coarse_problem(ControlMode::Velocity, 200);
    let base = perturbed_controls(&p, 0.2, 1);
    let opts = GradientCheckOptions {
        gradient_bias: 1e-2,
        ..Default::default()
    };
    let report = gradient_check(&p, &base, &opts).unwrap();
    assert!(!report.passed);
    assert!(report.worst_min_rel_err > 1e-3);
}

#[test]
fn gradient_vanishes_on_the_uncontrolled_trajectory() {
    for mode in [
        ControlMode::Velocity,
        ControlMode::Interaction,
        ControlMode::LinearSource,
        ControlMode::Joint,
    ] {
        let mut p = coarse_problem(mode, 200);
        let u = p.baseline_controls();
        p.target = p.evaluate(&u).unwrap().state;
        let eval = p.evaluate(&u).unwrap();
        let adj = p.adjoint(&eval.state, &u).unwrap();
        let g = p.gradient(&eval.state, &adj, &u).unwrap();
        assert!(g.norm() <= 1e-8, "{mode:?}: {}", g.norm());
    }
}

#[test]
fn source_gradient_is_energy_plus_adjoint() {
    let p = coarse_problem(ControlMode::LinearSource, 200);
    let u = perturbed_controls(&p, 0.1, 9);
    let eval = p.evaluate(&u).unwrap();
    let adj = p.adjoint(&eval.state, &u).unwrap();
    let g = p.gradient(&eval.state, &adj, &u).unwrap();
    let expected = adj.axpy(p.weights.beta_lin, &u.source).unwrap();
    let diff = g.get(ControlKind::Source).unwrap().axpy(-1.0, &expected).unwrap();
    assert!(diff.max_abs() < 1e-14);
}

#[test]
fn cost_matches_refined_angular_quadrature() {
    // band-limited in θ, so the rectangle rule on a 4x finer, half-shifted
    // grid integrates each time slice exactly
    let q_fn = |th: f64, t: f64| (1.0 + 0.5 * (th - t).cos() + 0.2 * (2.0 * th).sin() * t) / (2.0 * PI);
    let z_fn = |th: f64, _t: f64| (1.0 + 0.8 * (th - 1.0).cos()) / (2.0 * PI);
    let u_fn = |th: f64, t: f64| 0.3 * (th + t).sin() + 0.1 * (3.0 * th).cos();

    let grid = CircleGrid::new(32).unwrap();
    let time = TimeGrid::new(2.0, 40).unwrap();
    let q = Trajectory::from_fn(&grid, &time, q_fn).unwrap();
    let z = Trajectory::from_fn(&grid, &time, z_fn).unwrap();
    let mut controls = kuramoto_ocp::Controls::baseline(&grid, &time, 1.0);
    controls.u1 = Trajectory::from_fn(&grid, &time, u_fn).unwrap();
    let weights = CostWeights {
        alpha_r: 1.3,
        alpha_t: 7.0,
        beta1: 0.2,
        beta2: 0.1,
        beta_lin: 0.1,
    };
    let got = cost(&q, &z, &controls, &weights, ControlMode::Velocity, 1.0).unwrap();

    let fine = 4 * grid.n_theta();
    let h = 2.0 * PI / fine as f64;
    let slice = |f: &dyn Fn(f64) -> f64| (0..fine).map(|j| f((j as f64 + 0.5) * h)).sum::<f64>() * h;
    let mut running = 0.0;
    let mut energy = 0.0;
    for k in 0..time.n_rows() {
        let t = time.t(k);
        running += time.weight(k) * slice(&|th| (q_fn(th, t) - z_fn(th, t)).powi(2));
        energy += time.weight(k) * slice(&|th| u_fn(th, t).powi(2));
    }
    let t_end = time.t_final();
    let terminal = slice(&|th| (q_fn(th, t_end) - z_fn(th, t_end)).powi(2));
    let tracking = 0.5 * weights.alpha_r * running + 0.5 * weights.alpha_t * terminal;
    let energy = 0.5 * weights.beta1 * energy;

    assert!((got.tracking - tracking).abs() <= 1e-10 * tracking.max(1.0));
    assert!((got.energy - energy).abs() <= 1e-10 * energy.max(1.0));
    assert!((got.total - tracking - energy).abs() <= 1e-10);
}

#[test]
fn optimal_controls_rotate_with_the_problem() {
    let mut p = coarse_problem(ControlMode::Velocity, 200);
    p.time = TimeGrid::new(1.0, 200).unwrap();
    let cfg = OptimizerConfig {
        max_iters: 5,
        ..Default::default()
    };
    let u0 = perturbed_controls(&p, 0.2, 3);
    let a = optimize(&p, u0.clone(), &cfg).unwrap();

    let shift = 11isize;
    let mut r = p.clone();
    r.q0 = p.q0.rotate_nodes(shift);
    r.target = p.target.rotate_nodes(shift);
    let b = optimize(&r, u0.rotate_nodes(shift), &cfg).unwrap();

    assert_eq!(a.iterates.len(), b.iterates.len());
    let expected = a.controls.u1.rotate_nodes(shift);
    let diff = b.controls.u1.axpy(-1.0, &expected).unwrap();
    assert!(diff.max_abs() <= 1e-6, "{}", diff.max_abs());
    for (x, y) in a.iterates.iter().zip(&b.iterates) {
        assert!((x.cost - y.cost).abs() <= 1e-9 * x.cost);
    }
}
