//! Deformation-gradient transport, the characteristics oracle, divergence
//! monitoring, and mollification.

use mvsim::deformation::{
    characteristics_oracle, div_matrix_monitor, mollify_initial, transport_step,
};
use mvsim::fields::{DomainSpec, FieldOps, MatrixField, VelocityField};
use mvsim::harness::vortex_analytic;
use mvsim::operators::{advect_matrix, AdvectionMode, BcMode};
use std::f64::consts::PI;

type D = DomainSpec<f64>;

fn unit(n: usize) -> D {
    D::unit_square(n).unwrap()
}

#[test]
fn transport_step_without_velocity_is_bitwise_identity() {
    let d = unit(8);
    let f = MatrixField::from_fn(d, |x, y| [[1.0 + x, y], [x * y, 2.0 - y]]);
    let u = VelocityField::new(d);
    let out = transport_step(&f, &u, 1e-2, 0.0, AdvectionMode::Upwind);
    for a in 0..2 {
        for b in 0..2 {
            assert_eq!(out.comps[a][b], f.comps[a][b]);
        }
    }
}

#[test]
fn transport_with_uniform_shear_gradient_matches_matrix_exponential() {
    // u = (y, 0) has the constant gradient A = [[0, 1], [0, 0]], which is
    // nilpotent, so exp(tA) = I + tA and the Euler product (I + dt A)^n
    // reproduces it exactly; only cells reached by boundary effects deviate.
    let d = unit(64);
    let mut u = VelocityField::new(d);
    for i in 0..=d.nx {
        for j in 0..d.ny {
            let k = u.iu(i, j);
            u.u[k] = d.y_center(j);
        }
    }
    let t_end = 0.1;
    let nsteps = 16;
    let dt = t_end / nsteps as f64;
    let mut f = MatrixField::identity(d);
    for _ in 0..nsteps {
        f = transport_step(&f, &u, dt, 0.0, AdvectionMode::Central);
    }
    let margin = nsteps + 2;
    let mut worst = 0.0f64;
    for i in margin..d.nx - margin {
        for j in margin..d.ny - margin {
            let k = i * d.ny + j;
            worst = worst.max((f.comps[0][0][k] - 1.0).abs());
            worst = worst.max((f.comps[0][1][k] - t_end).abs());
            worst = worst.max(f.comps[1][0][k].abs());
            worst = worst.max((f.comps[1][1][k] - 1.0).abs());
        }
    }
    assert!(worst < 1e-12, "worst {worst}");
}

#[test]
fn transport_agrees_with_characteristics_on_vortex_flow() {
    let n = 64;
    let d = unit(n);
    let u_amp = 0.4;
    let field = vortex_analytic(d.lx, d.ly, u_amp);
    let a = u_amp * d.lx / PI;
    let u = VelocityField::from_stream_function(d, |x, y| {
        let sx = (PI * x).sin();
        let sy = (PI * y).sin();
        a * sx * sx * sy * sy
    });
    let f0 = |x: f64, y: f64| {
        [[1.0 + 0.2 * (2.0 * PI * y).sin(), 0.2 * (2.0 * PI * y).cos()],
         [0.2 * (2.0 * PI * x).sin(), 1.0 + 0.2 * (2.0 * PI * x).cos()]]
    };
    let t_end = 0.2;
    let umax = u.linf_norm();
    let dt = 0.5 * d.hx / umax;
    let nsteps = (t_end / dt).ceil() as usize;
    let dt = t_end / nsteps as f64;
    let mut f = MatrixField::from_fn(d, f0);
    for _ in 0..nsteps {
        f = transport_step(&f, &u, dt, 0.0, AdvectionMode::Upwind);
    }
    let oracle =
        characteristics_oracle(d, f0, move |_s, x, y| field(x, y), t_end, 200).unwrap();
    let mut gap = 0.0f64;
    for p in 0..2 {
        for q in 0..2 {
            for (x, y) in f.comps[p][q].iter().zip(&oracle.comps[p][q]) {
                gap = gap.max((x - y).abs());
            }
        }
    }
    // First-order scheme: the gap is O(dt + h) with a moderate constant.
    assert!(gap < 10.0 * (dt + d.hx), "gap {gap} dt {dt} h {}", d.hx);
}

#[test]
fn characteristics_oracle_identity_without_velocity() {
    let d = unit(16);
    let f0 = |x: f64, y: f64| [[x, y], [x * y, 1.0]];
    let out = characteristics_oracle(d, f0, |_s, _x, _y| ([0.0, 0.0], [[0.0; 2]; 2]), 0.3, 10)
        .unwrap();
    let expect = MatrixField::from_fn(d, f0);
    for p in 0..2 {
        for q in 0..2 {
            for (a, b) in out.comps[p][q].iter().zip(&expect.comps[p][q]) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn characteristics_oracle_uniform_gradient_matches_exponential() {
    // Constant A = [[0.3, 1.0], [0.0, -0.3]]: exp(tA) computed from the
    // closed form for a 2x2 matrix with trace zero.
    let d = unit(16);
    let a_mat = [[0.3, 1.0], [0.0, -0.3]];
    let field = move |x: f64, y: f64| {
        (
            [a_mat[0][0] * x + a_mat[0][1] * y, a_mat[1][0] * x + a_mat[1][1] * y],
            a_mat,
        )
    };
    let t = 0.7;
    // For trace-free A, exp(tA) = cosh(mu t) I + sinh(mu t)/mu A with
    // mu^2 = det(-A) ... here mu^2 = a11^2 + a12 a21 = 0.09.
    let mu = 0.3f64;
    let (ch, sh) = ((mu * t).cosh(), (mu * t).sinh() / mu);
    let exact = [
        [ch + sh * a_mat[0][0], sh * a_mat[0][1]],
        [sh * a_mat[1][0], ch + sh * a_mat[1][1]],
    ];
    let out = characteristics_oracle(
        d,
        |_x, _y| [[1.0, 0.0], [0.0, 1.0]],
        move |_s, x, y| field(x, y),
        t,
        100,
    )
    .unwrap();
    for p in 0..2 {
        for q in 0..2 {
            for v in &out.comps[p][q] {
                assert!((v - exact[p][q]).abs() < 1e-10, "{p}{q} {v} vs {}", exact[p][q]);
            }
        }
    }
}

#[test]
fn characteristics_oracle_time_reversal_recovers_initial_data() {
    // A time modulation with zero integral reparameterizes the autonomous
    // flow back to the identity map: X(t) = X(0) and F(t) = F0.
    let d = unit(24);
    let u_amp = 0.5;
    let field = vortex_analytic(d.lx, d.ly, u_amp);
    let t = 1.0;
    let modulated = move |s: f64, x: f64, y: f64| {
        let (u, a) = field(x, y);
        let phi = (2.0 * PI * s / t).cos();
        (
            [phi * u[0], phi * u[1]],
            [[phi * a[0][0], phi * a[0][1]], [phi * a[1][0], phi * a[1][1]]],
        )
    };
    let f0 = |x: f64, y: f64| [[1.0 + 0.1 * x, 0.2 * y], [0.3 * x * y, 1.0 - 0.1 * y]];
    let out = characteristics_oracle(d, f0, modulated, t, 1600).unwrap();
    let expect = MatrixField::from_fn(d, f0);
    let mut worst = 0.0f64;
    for p in 0..2 {
        for q in 0..2 {
            for (a, b) in out.comps[p][q].iter().zip(&expect.comps[p][q]) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    assert!(worst < 1e-9, "worst {worst}");
}

#[test]
fn div_monitor_vanishes_for_identity() {
    let d = unit(16);
    let (l2, linf) = div_matrix_monitor(&MatrixField::identity(d));
    assert_eq!(l2, 0.0);
    assert_eq!(linf, 0.0);
}

#[test]
fn div_monitor_sees_linear_first_column() {
    let d = unit(16);
    let mut f = MatrixField::new(d);
    for i in 0..d.nx {
        for j in 0..d.ny {
            f.comps[0][0][i * d.ny + j] = d.x_center(i);
        }
    }
    let (l2, linf) = div_matrix_monitor(&f);
    assert!(l2 > 0.5);
    assert!((linf - 1.0).abs() < 1e-13);
}

#[test]
fn div_monitor_vanishes_for_curl_constructed_columns() {
    // Columns depending on the transverse coordinate only are exactly
    // divergence-free for the mixed diagonal/corner-average stencil.
    let d = unit(32);
    let f = MatrixField::from_fn(d, |x, y| {
        [
            [1.0 + 0.3 * (2.0 * PI * y).sin(), 0.3 * (2.0 * PI * y).cos()],
            [0.3 * (2.0 * PI * x).sin(), 1.0 + 0.3 * (2.0 * PI * x).cos()],
        ]
    });
    let (l2, _) = div_matrix_monitor(&f);
    assert!(l2 < 1e-12, "l2 {l2}");
}

#[test]
fn divergence_is_preserved_by_transport_within_first_order() {
    let n = 48;
    let d = unit(n);
    let u_amp = 0.4;
    let a = u_amp / PI;
    let u = VelocityField::from_stream_function(d, |x, y| {
        let sx = (PI * x).sin();
        let sy = (PI * y).sin();
        a * sx * sx * sy * sy
    });
    let f0 = MatrixField::from_fn(d, |x, y| {
        [
            [1.0 + 0.3 * (2.0 * PI * y).sin(), 0.3 * (2.0 * PI * y).cos()],
            [0.3 * (2.0 * PI * x).sin(), 1.0 + 0.3 * (2.0 * PI * x).cos()],
        ]
    });
    let t_end = 0.2;
    let dt = 0.5 * d.hx / u.linf_norm();
    let nsteps = (t_end / dt).ceil() as usize;
    let dt = t_end / nsteps as f64;
    let mut f = f0;
    let mut sup = 0.0f64;
    for _ in 0..nsteps {
        f = transport_step(&f, &u, dt, 0.0, AdvectionMode::Upwind);
        sup = sup.max(div_matrix_monitor(&f).0);
    }
    assert!(sup <= 5.0 * (dt + d.hx), "sup {sup} budget {}", 5.0 * (dt + d.hx));
}

#[test]
fn central_advection_of_matrix_is_skew_for_clamped_div_free_velocity() {
    let d = unit(24);
    let u = VelocityField::from_stream_function(d, |x, y| {
        let sx = (PI * x).sin();
        let sy = (PI * y).sin();
        0.3 * sx * sx * sy * sy
    });
    let mut f = MatrixField::new(d);
    for a in 0..2 {
        for b in 0..2 {
            for i in 2..d.nx - 2 {
                for j in 2..d.ny - 2 {
                    let (x, y) = (d.x_center(i), d.y_center(j));
                    f.comps[a][b][i * d.ny + j] = ((a + 1) as f64 * PI * x).sin() * ((b + 1) as f64 * PI * y).sin();
                }
            }
        }
    }
    let adv = advect_matrix(&u, &f, AdvectionMode::Central, BcMode::ExtrapolateFirstOrder);
    let inner = adv.l2_inner(&f).unwrap();
    assert!(inner.abs() <= 1e-10 * f.l2_norm().powi(2), "inner {inner}");
}

#[test]
fn mollify_preserves_constants_and_smooths_steps() {
    let d = unit(32);
    let c = MatrixField::from_fn(d, |_, _| [[2.0, -1.0], [0.5, 3.0]]);
    let out = mollify_initial(&c, 0.1).unwrap();
    for a in 0..2 {
        for b in 0..2 {
            for (x, y) in out.comps[a][b].iter().zip(&c.comps[a][b]) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    let step = MatrixField::from_fn(d, |x, _| {
        let v = if x < 0.5 { 1.0 } else { -1.0 };
        [[v, 0.0], [0.0, 0.0]]
    });
    let sm = mollify_initial(&step, 0.1).unwrap();
    assert!(sm.linf_norm() <= step.linf_norm() + 1e-14);
    // Total variation along x drops for the smoothed component.
    let tv = |f: &MatrixField<f64>| -> f64 {
        let mut acc = 0.0;
        for i in 1..d.nx {
            for j in 0..d.ny {
                acc += (f.comps[0][0][i * d.ny + j] - f.comps[0][0][(i - 1) * d.ny + j]).abs();
            }
        }
        acc
    };
    assert!(tv(&sm) < tv(&step));
}

#[test]
fn mollify_degenerates_to_identity_below_grid_spacing() {
    let d = unit(16);
    let f = MatrixField::from_fn(d, |x, y| [[x, y], [x + y, x - y]]);
    let out = mollify_initial(&f, 1e-3).unwrap();
    for a in 0..2 {
        for b in 0..2 {
            assert_eq!(out.comps[a][b], f.comps[a][b]);
        }
    }
    assert!(mollify_initial(&f, 0.0).is_err());
}
