use std::f64::consts::PI;

use kuramoto_ocp::coupling::{moments, order_parameter, w_of, w_star_of};
use kuramoto_ocp::density::{gaussian_mixture, MixtureComponent};
use kuramoto_ocp::oracles::{w_quadrature, w_star_quadrature};
use kuramoto_ocp::{CircleGrid, Field};
use proptest::prelude::*;

fn grid_size() -> impl Strategy<Value = usize> {
    prop_oneof![Just(16usize), Just(64), Just(128)]
}

fn coefficients(max_mode: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..=max_mode + 1)
}

/// `Σ_m a_m cos mθ + b_m sin mθ`, truncated below the Nyquist mode.
fn field(grid: &CircleGrid, coeffs: &[(f64, f64)]) -> Field {
    let limit = grid.n_theta() / 2 - 1;
    Field::from_fn(grid, |t| {
        coeffs
            .iter()
            .enumerate()
            .take(limit + 1)
            .map(|(m, (a, b))| a * (m as f64 * t).cos() + b * (m as f64 * t).sin())
            .sum()
    })
    .unwrap()
}

proptest! {
    #[test]
    fn green_identity(n in grid_size(), cf in coefficients(20), cg in coefficients(20)) {
        let grid = CircleGrid::new(n).unwrap();
        let (f, g) = (field(&grid, &cf), field(&grid, &cg));
        let lhs = grid.integrate(&grid.ddtheta(&f).unwrap().mul(&g).unwrap()).unwrap();
        let rhs = grid.integrate(&f.mul(&grid.ddtheta(&g).unwrap()).unwrap()).unwrap();
        prop_assert!((lhs + rhs).abs() <= 1e-10, "residual {}", lhs + rhs);
    }

    #[test]
    fn first_derivative_twice_is_second(n in grid_size(), cf in coefficients(20)) {
        let grid = CircleGrid::new(n).unwrap();
        let f = field(&grid, &cf);
        let twice = grid.ddtheta(&grid.ddtheta(&f).unwrap()).unwrap();
        let direct = grid.d2dtheta2(&f).unwrap();
        prop_assert!(twice.sub(&direct).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn diffusion_is_a_semigroup(
        n in grid_size(),
        cf in coefficients(20),
        d in 0.0f64..1.0,
        t1 in 1e-3f64..2.0,
        t2 in 1e-3f64..2.0,
    ) {
        let grid = CircleGrid::new(n).unwrap();
        let f = field(&grid, &cf);
        let once = grid.diffuse(&f, d, t1 + t2).unwrap();
        let twice = grid.diffuse(&grid.diffuse(&f, d, t1).unwrap(), d, t2).unwrap();
        prop_assert!(once.sub(&twice).unwrap().max_abs() <= 1e-12);
        prop_assert!((grid.integrate(&once).unwrap() - grid.integrate(&f).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn interaction_duality(
        n in grid_size(),
        cf in coefficients(10),
        cg in coefficients(10),
        alpha in -PI..PI,
    ) {
        let grid = CircleGrid::new(n).unwrap();
        let (f, g) = (field(&grid, &cf), field(&grid, &cg));
        let lhs = grid.integrate(&w_of(&f, alpha).mul(&g).unwrap()).unwrap();
        let rhs = grid.integrate(&w_star_of(&g, alpha).mul(&f).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn moment_identity_matches_quadrature(
        n in grid_size(),
        cf in coefficients(20),
        alpha in -PI..PI,
    ) {
        let grid = CircleGrid::new(n).unwrap();
        let f = field(&grid, &cf);
        prop_assert!(w_of(&f, alpha).sub(&w_quadrature(&f, alpha)).unwrap().max_abs() <= 1e-12);
        prop_assert!(
            w_star_of(&f, alpha).sub(&w_star_quadrature(&f, alpha)).unwrap().max_abs() <= 1e-12
        );
    }

    #[test]
    fn transport_field_bounded_by_mass(
        n in grid_size(),
        comps in proptest::collection::vec((0.01f64..1.0, 0.0f64..2.0 * PI, 0.05f64..2.0), 1..4),
        alpha in -PI..PI,
    ) {
        let grid = CircleGrid::new(n).unwrap();
        let comps: Vec<MixtureComponent> = comps
            .into_iter()
            .map(|(weight, mean, sigma)| MixtureComponent { weight, mean, sigma })
            .collect();
        let q = gaussian_mixture(&grid, &comps).unwrap();
        prop_assert!(w_of(&q, alpha).max_abs() <= 1.0 + 1e-9);
    }

    #[test]
    fn general_field_bounded_by_absolute_mass(n in grid_size(), cf in coefficients(20)) {
        let grid = CircleGrid::new(n).unwrap();
        let f = field(&grid, &cf);
        let abs_mass = grid.integrate(&f.map(f64::abs)).unwrap();
        prop_assert!(w_of(&f, 0.3).max_abs() <= abs_mass * (1.0 + 1e-12));
    }

    #[test]
    fn order_parameter_rotates_with_the_density(
        comps in proptest::collection::vec((0.01f64..1.0, 0.0f64..2.0 * PI, 0.1f64..1.5), 1..4),
        shift in -64isize..64,
    ) {
        let grid = CircleGrid::new(128).unwrap();
        let comps: Vec<MixtureComponent> = comps
            .into_iter()
            .map(|(weight, mean, sigma)| MixtureComponent { weight, mean, sigma })
            .collect();
        let q = gaussian_mixture(&grid, &comps).unwrap();
        let rotated = q.rotate_nodes(shift);
        let a = order_parameter(&q).unwrap();
        let b = order_parameter(&rotated).unwrap();
        prop_assert!((a.r - b.r).abs() <= 1e-10);
        if a.r > 1e-6 {
            let delta = shift as f64 * grid.d_theta();
            let diff = (b.psi - a.psi - delta).rem_euclid(2.0 * PI);
            let diff = diff.min(2.0 * PI - diff);
            prop_assert!(diff <= 1e-10 / a.r.min(1.0), "phase shift off by {}", diff);
        }
    }
}

#[test]
fn raised_cosine_moments_match_quadrature() {
    let grid = CircleGrid::new(128).unwrap();
    let q = Field::from_fn(&grid, |t| (1.0 + t.cos()) / (2.0 * PI)).unwrap();
    let (c, s) = moments(&q);
    let theta = grid.theta();
    let c_ref: f64 = theta.iter().zip(q.values()).map(|(t, v)| t.cos() * v).sum::<f64>() * grid.d_theta();
    let s_ref: f64 = theta.iter().zip(q.values()).map(|(t, v)| t.sin() * v).sum::<f64>() * grid.d_theta();
    assert!((c - c_ref).abs() < 1e-14 && (c - 0.5).abs() < 1e-14);
    assert!((s - s_ref).abs() < 1e-14 && s.abs() < 1e-14);
    let w = w_quadrature(&q, PI / 2.0);
    let expected = Field::from_fn(&grid, |t| -t.cos() / 2.0).unwrap();
    assert!(w.sub(&expected).unwrap().max_abs() < 1e-12);
}
