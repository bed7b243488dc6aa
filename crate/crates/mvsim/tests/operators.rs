//! Discrete operators: stencil exactness, boundary conventions, adjointness,
//! and skew-symmetry.

use mvsim::fields::{DomainSpec, FieldOps, Layout, MatrixField, ScalarField, Vec3Field, VelocityField};
use mvsim::harness::SplitMix64;
use mvsim::operators::{
    advect_matrix, advect_scalar, divergence_matrix, divergence_vector, gradient_scalar, jacobian,
    laplacian_scalar, trilaplacian, AdvectionMode, BcMode,
};
use proptest::prelude::*;
use std::f64::consts::PI;

type D = DomainSpec<f64>;

fn unit(n: usize) -> D {
    D::unit_square(n).unwrap()
}

#[test]
fn gradient_of_constant_is_zero() {
    let d = unit(8);
    let phi = ScalarField::from_fn(d, Layout::CellCenter, |_, _| 7.5);
    let g = gradient_scalar(&phi);
    assert_eq!(g.linf_norm(), 0.0);
}

#[test]
fn gradient_of_x_is_unit_in_interior() {
    let d = unit(8);
    let phi = ScalarField::from_fn(d, Layout::CellCenter, |x, _| x);
    let g = gradient_scalar(&phi);
    for i in 1..d.nx {
        for j in 0..d.ny {
            assert!((g.u_at(i, j) - 1.0).abs() < 1e-13);
        }
    }
    for i in 0..d.nx {
        for j in 1..d.ny {
            assert_eq!(g.v_at(i, j), 0.0);
        }
    }
}

#[test]
fn gradient_of_x_squared_exact_at_face_midpoint() {
    // Central difference of x^2 across a face equals 2x at the face exactly.
    let d = unit(4);
    assert_eq!(d.hx, 0.25);
    let phi = ScalarField::from_fn(d, Layout::CellCenter, |x, _| x * x);
    let g = gradient_scalar(&phi);
    // Interior face at x = 0.5 is face index 2.
    assert!((g.u_at(2, 1) - 1.0).abs() < 1e-14);
}

#[test]
fn divergence_of_constant_velocity_is_zero() {
    let d = unit(8);
    let mut u = VelocityField::new(d);
    u.u.fill(2.0);
    u.v.fill(-3.0);
    let div = divergence_vector(&u);
    assert_eq!(div.linf_norm(), 0.0);
}

#[test]
fn divergence_of_linear_solenoidal_field_vanishes() {
    let d = unit(16);
    let mut u = VelocityField::new(d);
    for i in 0..=d.nx {
        for j in 0..d.ny {
            let k = u.iu(i, j);
            u.u[k] = d.x_face(i);
        }
    }
    for i in 0..d.nx {
        for j in 0..=d.ny {
            let k = u.iv(i, j);
            u.v[k] = -d.y_face(j);
        }
    }
    let div = divergence_vector(&u);
    assert!(div.linf_norm() < 1e-13);
}

#[test]
fn divergence_of_x_velocity_is_one() {
    let d = unit(8);
    let mut u = VelocityField::new(d);
    for i in 0..=d.nx {
        for j in 0..d.ny {
            let k = u.iu(i, j);
            u.u[k] = d.x_face(i);
        }
    }
    let div = divergence_vector(&u);
    for i in 0..d.nx {
        for j in 0..d.ny {
            assert!((div.at(i, j) - 1.0).abs() < 1e-13);
        }
    }
}

#[test]
fn divergence_matrix_constant_and_identity_are_zero() {
    let d = unit(8);
    let mut f = MatrixField::new(d);
    for a in 0..2 {
        for b in 0..2 {
            f.comps[a][b].fill(1.5);
        }
    }
    assert_eq!(divergence_matrix(&f).linf_norm(), 0.0);
    assert_eq!(divergence_matrix(&MatrixField::identity(d)).linf_norm(), 0.0);
}

#[test]
fn divergence_matrix_x_in_first_column() {
    // F_11 = x, rest 0: column divergence has first component 1 on interior
    // x-faces.
    let d = unit(8);
    let mut f = MatrixField::new(d);
    for i in 0..d.nx {
        for j in 0..d.ny {
            f.comps[0][0][i * d.ny + j] = d.x_center(i);
        }
    }
    let div = divergence_matrix(&f);
    for i in 1..d.nx {
        for j in 0..d.ny {
            assert!((div.u_at(i, j) - 1.0).abs() < 1e-13);
        }
    }
    for i in 0..d.nx {
        for j in 1..d.ny {
            assert_eq!(div.v_at(i, j), 0.0);
        }
    }
}

#[test]
fn laplacian_of_constant_is_zero_including_boundary() {
    let d = unit(8);
    let f = ScalarField::from_fn(d, Layout::CellCenter, |_, _| 4.2);
    let lap = laplacian_scalar(&f, BcMode::NeumannZero);
    assert_eq!(lap.linf_norm(), 0.0);
}

#[test]
fn laplacian_exact_on_quadratics_in_interior() {
    let d = unit(16);
    let f = ScalarField::from_fn(d, Layout::CellCenter, |x, y| x * x + y * y);
    let lap = laplacian_scalar(&f, BcMode::NeumannZero);
    for i in 1..d.nx - 1 {
        for j in 1..d.ny - 1 {
            assert!((lap.at(i, j) - 4.0).abs() < 1e-12);
        }
    }
}

#[test]
fn laplacian_neumann_cosine_converges_at_second_order() {
    // cos(pi x) has zero normal derivative at both walls; mirror ghosts are
    // second-order consistent with it.
    let err = |n: usize| -> f64 {
        let d = unit(n);
        let f = ScalarField::from_fn(d, Layout::CellCenter, |x, _| (PI * x).cos());
        let lap = laplacian_scalar(&f, BcMode::NeumannZero);
        let mut worst: f64 = 0.0;
        for i in 0..d.nx {
            for j in 0..d.ny {
                let exact = -PI * PI * (PI * d.x_center(i)).cos();
                worst = worst.max((lap.at(i, j) - exact).abs());
            }
        }
        worst
    };
    let e1 = err(16);
    let e2 = err(32);
    let e3 = err(64);
    let r1 = (e1 / e2).log2();
    let r2 = (e2 / e3).log2();
    assert!(r1 > 1.9 && r2 > 1.9, "orders {r1} {r2}");
}

#[test]
fn trilaplacian_of_zero_is_zero() {
    let d = unit(8);
    let u = VelocityField::new(d);
    assert_eq!(trilaplacian(&u).linf_norm(), 0.0);
}

#[test]
fn trilaplacian_annihilates_low_degree_polynomials_in_deep_interior() {
    // Sixth differences of a degree-5 polynomial vanish; only cells within
    // three stencil widths of a wall see ghosts.
    let d = unit(32);
    let poly = |x: f64, y: f64| {
        x.powi(5) - 2.0 * x.powi(3) * y * y + y.powi(4) + x * y - 3.0
    };
    let mut u = VelocityField::new(d);
    for i in 0..=d.nx {
        for j in 0..d.ny {
            let k = u.iu(i, j);
            u.u[k] = poly(d.x_face(i), d.y_center(j));
        }
    }
    for i in 0..d.nx {
        for j in 0..=d.ny {
            let k = u.iv(i, j);
            u.v[k] = poly(d.x_center(i), d.y_face(j));
        }
    }
    let tri = trilaplacian(&u);
    // Scale: the raw stencil amplifies rounding by h^-6 = 2^30 per level.
    let scale = 1.0 / d.hx.powi(6);
    let mut worst: f64 = 0.0;
    for i in 4..d.nx - 3 {
        for j in 4..d.ny - 4 {
            worst = worst.max(tri.u[u.iu(i, j)].abs());
        }
    }
    for i in 4..d.nx - 4 {
        for j in 4..d.ny - 3 {
            worst = worst.max(tri.v[u.iv(i, j)].abs());
        }
    }
    assert!(worst < 1e-9 * scale, "worst {worst} scale {scale}");
}

#[test]
fn trilaplacian_eigenvalue_matches_discrete_symbol() {
    // sin(pi x) sin(pi y) sampled on faces is an exact eigenfunction of the
    // clamped Laplacian (odd ghosts reproduce the sine's odd extension), so
    // the nested operator multiplies by the cubed eigenvalue.
    for n in [16, 32] {
        let d = unit(n);
        let h = d.hx;
        let lambda = -(2.0 - 2.0 * (PI * h).cos()) / (h * h)
            + -(2.0 - 2.0 * (PI * h).cos()) / (h * h);
        let expected = lambda.powi(3);
        let mut u = VelocityField::new(d);
        for i in 0..=d.nx {
            for j in 0..d.ny {
                let k = u.iu(i, j);
                u.u[k] = (PI * d.x_face(i)).sin() * (PI * d.y_center(j)).sin();
            }
        }
        // sin(pi * 1.0) evaluates to ~1e-16, not zero; amplified by h^-6 that
        // would dominate the comparison, so pin the wall faces exactly.
        u.clamp_walls();
        let tri = trilaplacian(&u);
        for i in 1..d.nx {
            for j in 0..d.ny {
                let base = u.u[u.iu(i, j)];
                if base.abs() > 0.1 {
                    let ratio = tri.u[u.iu(i, j)] / base;
                    let rel = (ratio - expected).abs() / expected.abs();
                    // Rounding in the sine samples near the walls is cubed by
                    // the nesting, so the floor sits near 1e-10, not 1e-15.
                    assert!(rel < 1e-8, "n {n} rel {rel}");
                }
            }
        }
    }
}

#[test]
fn jacobian_of_constant_velocity_is_zero() {
    let d = unit(8);
    let mut u = VelocityField::new(d);
    u.u.fill(1.0);
    u.v.fill(-2.0);
    let j = jacobian(&u);
    for a in 0..2 {
        for b in 0..2 {
            for i in 1..d.nx - 1 {
                for jj in 1..d.ny - 1 {
                    assert_eq!(j.comps[a][b][i * d.ny + jj], 0.0);
                }
            }
        }
    }
}

#[test]
fn jacobian_of_shear_velocity() {
    // u = (y, 0): the only nonzero entry is d_y u_1 = 1 (row gradient).
    let d = unit(8);
    let mut u = VelocityField::new(d);
    for i in 0..=d.nx {
        for j in 0..d.ny {
            let k = u.iu(i, j);
            u.u[k] = d.y_center(j);
        }
    }
    let j = jacobian(&u);
    for i in 1..d.nx - 1 {
        for jj in 1..d.ny - 1 {
            let k = i * d.ny + jj;
            assert!((j.comps[0][1][k] - 1.0).abs() < 1e-13);
            assert_eq!(j.comps[0][0][k], 0.0);
            assert_eq!(j.comps[1][0][k], 0.0);
            assert_eq!(j.comps[1][1][k], 0.0);
        }
    }
}

#[test]
fn jacobian_of_diagonal_stretch() {
    let d = unit(8);
    let mut u = VelocityField::new(d);
    for i in 0..=d.nx {
        for j in 0..d.ny {
            let k = u.iu(i, j);
            u.u[k] = d.x_face(i);
        }
    }
    for i in 0..d.nx {
        for j in 0..=d.ny {
            let k = u.iv(i, j);
            u.v[k] = -d.y_face(j);
        }
    }
    let j = jacobian(&u);
    for i in 1..d.nx - 1 {
        for jj in 1..d.ny - 1 {
            let k = i * d.ny + jj;
            assert!((j.comps[0][0][k] - 1.0).abs() < 1e-13);
            assert!((j.comps[1][1][k] + 1.0).abs() < 1e-13);
            assert!(j.comps[0][1][k].abs() < 1e-13);
            assert!(j.comps[1][0][k].abs() < 1e-13);
        }
    }
}

#[test]
fn advect_with_zero_velocity_is_zero() {
    let d = unit(8);
    let u = VelocityField::new(d);
    let f = ScalarField::from_fn(d, Layout::CellCenter, |x, y| (x * y).sin());
    for mode in [AdvectionMode::Upwind, AdvectionMode::Central] {
        let a = advect_scalar(&u, &f, mode, BcMode::NeumannZero);
        assert_eq!(a.linf_norm(), 0.0);
    }
}

#[test]
fn advect_constant_field_is_zero_in_interior() {
    let d = unit(8);
    let mut u = VelocityField::new(d);
    u.u.fill(1.0);
    u.v.fill(0.5);
    let f = ScalarField::from_fn(d, Layout::CellCenter, |_, _| 2.0);
    for mode in [AdvectionMode::Upwind, AdvectionMode::Central] {
        let a = advect_scalar(&u, &f, mode, BcMode::NeumannZero);
        assert_eq!(a.linf_norm(), 0.0);
    }
}

#[test]
fn advect_linear_profile_gives_unit_derivative() {
    let d = unit(8);
    let mut u = VelocityField::new(d);
    u.u.fill(1.0);
    let f = ScalarField::from_fn(d, Layout::CellCenter, |x, _| x);
    for mode in [AdvectionMode::Upwind, AdvectionMode::Central] {
        let a = advect_scalar(&u, &f, mode, BcMode::ExtrapolateFirstOrder);
        for i in 1..d.nx - 1 {
            for j in 0..d.ny {
                assert!((a.at(i, j) - 1.0).abs() < 1e-13, "{mode:?}");
            }
        }
    }
}

fn random_clamped_velocity(d: D, seed: u64) -> VelocityField<f64> {
    let mut rng = SplitMix64::new(seed);
    let mut u = VelocityField::new(d);
    for v in u.u.iter_mut() {
        *v = rng.next_sym::<f64>();
    }
    for v in u.v.iter_mut() {
        *v = rng.next_sym::<f64>();
    }
    u.clamp_walls();
    u
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn div_grad_adjointness(seed_u in any::<u64>(), seed_p in any::<u64>()) {
        // <div u, phi> = -<u, grad phi> for u vanishing on wall faces; the
        // face gradient is zero there, so no boundary terms appear.
        let d = unit(12);
        let u = random_clamped_velocity(d, seed_u);
        let mut rng = SplitMix64::new(seed_p);
        let mut phi = ScalarField::new(d, Layout::CellCenter);
        for v in phi.data.iter_mut() {
            *v = rng.next_sym::<f64>();
        }
        let div = divergence_vector(&u);
        let grad = gradient_scalar(&phi);
        let lhs = div.l2_inner(&phi).unwrap();
        let rhs = -u.l2_inner(&grad).unwrap();
        let scale = (u.l2_norm() * phi.l2_norm()).max(1.0);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn neumann_laplacian_conserves_mean(seed in any::<u64>()) {
        let d = unit(12);
        let mut rng = SplitMix64::new(seed);
        let mut f = ScalarField::new(d, Layout::CellCenter);
        for v in f.data.iter_mut() {
            *v = rng.next_sym::<f64>();
        }
        let lap = laplacian_scalar(&f, BcMode::NeumannZero);
        prop_assert!(lap.mean().abs() <= 1e-12 * f.l2_norm().max(1.0));
    }

    #[test]
    fn central_advection_skew_for_div_free_velocity(seed in any::<u64>()) {
        // Flux-skew central advection with a MAC divergence-free velocity is
        // exactly skew as a quadratic form when the field vanishes near walls.
        let d = unit(16);
        let mut rng = SplitMix64::new(seed);
        let amp = 0.5 + 0.5 * rng.next_sym::<f64>().abs();
        let u = VelocityField::from_stream_function(d, |x, y| {
            let sx = (PI * x).sin();
            let sy = (PI * y).sin();
            amp * sx * sx * sy * sy
        });
        let mut f = MatrixField::new(d);
        for a in 0..2 {
            for b in 0..2 {
                for i in 2..d.nx - 2 {
                    for j in 2..d.ny - 2 {
                        f.comps[a][b][i * d.ny + j] = rng.next_sym::<f64>();
                    }
                }
            }
        }
        let adv = advect_matrix(&u, &f, AdvectionMode::Central, BcMode::ExtrapolateFirstOrder);
        let inner = adv.l2_inner(&f).unwrap();
        let fn2 = f.l2_norm().powi(2);
        prop_assert!(inner.abs() <= 1e-10 * fn2.max(1e-6));
    }

    #[test]
    fn negated_trilaplacian_is_positive_semidefinite(seed in any::<u64>()) {
        let d = unit(10);
        let u = random_clamped_velocity(d, seed);
        let tri = trilaplacian(&u);
        let q = -tri.l2_inner(&u).unwrap();
        prop_assert!(q >= -1e-10);
    }
}
