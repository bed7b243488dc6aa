//! Energy components, cumulative dissipation, the residual of the discrete
//! energy identity, and the sweep diagnostics.

use mvsim::energetics::{
    accumulate_dissipation, csv_row, defect_proxy, energy_residual, eps_sweep_order,
    exchange_energy, sphere_defect_trace, total_energy, EnergyLedger, CSV_HEADER,
};
use mvsim::error::MvError;
use mvsim::fields::{DomainSpec, StateSnapshot, Vec3Field, VelocityField};
use mvsim::harness::SplitMix64;
use mvsim::magnetization::{llg_step, PenaltySpec};
use mvsim::operators::AdvectionMode;
use proptest::prelude::*;
use std::f64::consts::PI;

type D = DomainSpec<f64>;

fn unit(n: usize) -> D {
    D::unit_square(n).unwrap()
}

#[test]
fn rest_state_energies() {
    let d = unit(16);
    let state = StateSnapshot::rest(d);
    let e = total_energy(&state, 1e-2);
    assert_eq!(e.e_kin, 0.0);
    // F = identity integrates |F|^2 = 2 over the unit square.
    assert!((e.e_elastic - 1.0).abs() < 1e-13);
    assert_eq!(e.e_exchange, 0.0);
    assert_eq!(e.e_penalty, 0.0);
    assert!((e.conserved_energy() - 1.0).abs() < 1e-13);
    assert_eq!(e.dissipation(), 0.0);
    assert_eq!(e.work_ext(), 0.0);
}

#[test]
fn constant_off_sphere_penalty_value() {
    // |M|^2 - 1 = 3 everywhere, so the penalty is (4 eps)^-1 * 9 = 2.25 at
    // eps = 1.
    let d = unit(8);
    let mut state = StateSnapshot::rest(d);
    state.m = Vec3Field::constant(d, [2.0, 0.0, 0.0]);
    let e = total_energy(&state, 1.0);
    assert!((e.e_penalty - 2.25).abs() < 1e-12, "pen {}", e.e_penalty);
}

#[test]
fn exchange_energy_matches_face_difference_form() {
    // Summation by parts with Neumann ghosts: (1/2)(-lap M, M) equals half
    // the sum of squared one-sided face differences (wall fluxes vanish).
    let d = unit(24);
    let mut rng = SplitMix64::new(11);
    let mut m = Vec3Field::new(d);
    for c in 0..3 {
        for v in m.comps[c].iter_mut() {
            *v = rng.next_sym::<f64>();
        }
    }
    let vol = d.cell_volume();
    let mut acc = 0.0;
    for c in 0..3 {
        for i in 0..d.nx - 1 {
            for j in 0..d.ny {
                let dmx =
                    (m.comps[c][(i + 1) * d.ny + j] - m.comps[c][i * d.ny + j]) / d.hx;
                acc += dmx * dmx;
            }
        }
        for i in 0..d.nx {
            for j in 0..d.ny - 1 {
                let dmy = (m.comps[c][i * d.ny + j + 1] - m.comps[c][i * d.ny + j]) / d.hy;
                acc += dmy * dmy;
            }
        }
    }
    let direct = 0.5 * acc * vol;
    let viaop = exchange_energy(&m);
    assert!(
        (direct - viaop).abs() <= 1e-10 * direct.abs().max(1.0),
        "direct {direct} op {viaop}"
    );
}

#[test]
fn sphere_defect_trace_of_rest_state() {
    let d = unit(8);
    let state = StateSnapshot::rest(d);
    let (f2, gm2) = sphere_defect_trace(&state);
    assert!((f2 - 2.0).abs() < 1e-13);
    assert_eq!(gm2, 0.0);
}

#[test]
fn stationary_state_accumulates_nothing() {
    let d = unit(16);
    let state = StateSnapshot::rest(d);
    let mut ledger = total_energy(&state, 1e-2);
    let l0 = ledger;
    accumulate_dissipation(
        &mut ledger,
        &state,
        &state,
        1e-3,
        AdvectionMode::Central,
        false,
        1e-2,
        None,
    );
    assert_eq!(ledger.d_visc, 0.0);
    assert_eq!(ledger.d_hyper, 0.0);
    assert_eq!(ledger.d_llg, 0.0);
    assert_eq!(ledger.work_zeeman, 0.0);
    assert_eq!(ledger.work_kelvin, 0.0);
    assert_eq!(energy_residual(&ledger, &l0), 0.0);
}

#[test]
fn viscous_increment_matches_quadratic_form() {
    let d = unit(32);
    let mut state = StateSnapshot::rest(d);
    state.u = VelocityField::from_stream_function(d, |x, y| {
        0.3 * (PI * x).sin().powi(2) * (PI * y).sin().powi(2)
    });
    let dt = 1e-3;
    let mut ledger = EnergyLedger::zero(0.0);
    accumulate_dissipation(
        &mut ledger,
        &state,
        &state,
        dt,
        AdvectionMode::Central,
        false,
        1e-2,
        None,
    );
    // Direct evaluation of -dt <lap u, u> with the same operator.
    let lap = mvsim::operators::laplacian_velocity(&state.u);
    let vol = d.cell_volume();
    let mut q = 0.0;
    for (a, b) in lap.u.iter().zip(&state.u.u) {
        q += a * b;
    }
    for (a, b) in lap.v.iter().zip(&state.u.v) {
        q += a * b;
    }
    let expected = -dt * q * vol;
    assert!(expected > 0.0);
    assert!(
        (ledger.d_visc - expected).abs() <= 1e-12 * expected,
        "got {} want {}",
        ledger.d_visc,
        expected
    );
    assert_eq!(ledger.d_hyper, 0.0);
}

#[test]
fn penalty_relaxation_increment_matches_rate_norm() {
    // u = 0, constant off-sphere M: the LLG increment is (1/2) dt |dM/dt|^2.
    let d = unit(8);
    let m0 = Vec3Field::constant(d, [1.2, 0.0, 0.0]);
    let spec = PenaltySpec {
        eps: 0.5,
        semi_implicit: false,
    };
    let dt = 2e-3;
    let u = VelocityField::new(d);
    let m1 = llg_step(&m0, &u, None, dt, &spec, 0.0, AdvectionMode::Central).unwrap();
    let mut ledger = EnergyLedger::zero(0.0);
    let mut s_old = StateSnapshot::rest(d);
    s_old.m = m0;
    let mut s_new = StateSnapshot::rest(d);
    s_new.m = m1.clone();
    accumulate_dissipation(
        &mut ledger,
        &s_old,
        &s_new,
        dt,
        AdvectionMode::Central,
        false,
        spec.eps,
        None,
    );
    let vol = d.cell_volume();
    let mut vsq = 0.0;
    for c in 0..3 {
        for (a, b) in s_new.m.comps[c].iter().zip(&s_old.m.comps[c]) {
            let rate = (a - b) / dt;
            vsq += rate * rate;
        }
    }
    let expected = 0.5 * dt * vsq * vol;
    assert!(expected > 0.0);
    assert!(
        (ledger.d_llg - expected).abs() <= 1e-12 * expected,
        "got {} want {}",
        ledger.d_llg,
        expected
    );
}

#[test]
fn zeeman_work_hand_computed() {
    // M flips (1,0,0) -> (0,1,0) in one step under H = (0,1,0) with u = 0:
    // Zeeman work integrates H . dM = 1 over the unit square, and the drive
    // pairing -(M x (M x H)) . V also integrates to 1.
    let d = unit(8);
    let mut s_old = StateSnapshot::rest(d);
    s_old.m = Vec3Field::constant(d, [1.0, 0.0, 0.0]);
    let mut s_new = StateSnapshot::rest(d);
    s_new.m = Vec3Field::constant(d, [0.0, 1.0, 0.0]);
    let h = Vec3Field::constant(d, [0.0, 1.0, 0.0]);
    let mut ledger = EnergyLedger::zero(0.0);
    accumulate_dissipation(
        &mut ledger,
        &s_old,
        &s_new,
        1e-2,
        AdvectionMode::Central,
        false,
        1.0,
        Some(&h),
    );
    assert!((ledger.work_zeeman - 1.0).abs() < 1e-12);
    assert!((ledger.work_residual - 1.0).abs() < 1e-12);
    // Kelvin power vanishes for u = 0.
    assert_eq!(ledger.work_kelvin, 0.0);
    assert!((ledger.work_ext() - 1.0).abs() < 1e-12);
}

#[test]
fn residual_is_zero_for_identical_ledgers() {
    let d = unit(16);
    let state = StateSnapshot::rest(d);
    let ledger = total_energy(&state, 1e-2);
    assert_eq!(energy_residual(&ledger, &ledger), 0.0);
}

#[test]
fn sweep_slope_recovers_exact_power_laws() {
    let eps: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
    let half: Vec<(f64, f64)> = eps.iter().map(|&e| (e, e.sqrt())).collect();
    let one: Vec<(f64, f64)> = eps.iter().map(|&e| (e, 3.0 * e)).collect();
    assert!((eps_sweep_order(&half).unwrap() - 0.5).abs() < 1e-12);
    assert!((eps_sweep_order(&one).unwrap() - 1.0).abs() < 1e-12);
    assert!(matches!(
        eps_sweep_order(&half[..2]),
        Err(MvError::Config(_))
    ));
}

#[test]
fn defect_proxy_identical_and_synthetic() {
    let a = vec![(1.0, 2.0), (1.5, 2.5), (2.0, 3.0)];
    let zeros = defect_proxy(&[a.clone(), a.clone()]).unwrap();
    assert_eq!(zeros, vec![vec![0.0, 0.0, 0.0]]);

    let b = vec![(1.25, 1.75), (1.5, 3.0), (1.0, 3.25)];
    let rows = defect_proxy(&[a.clone(), b]).unwrap();
    assert_eq!(rows.len(), 1);
    let want: [f64; 3] = [0.25 + 0.25, 0.0 + 0.5, 1.0 + 0.25];
    for (got, want) in rows[0].iter().zip(want) {
        assert!((got - want).abs() < 1e-14);
    }

    assert!(matches!(defect_proxy(&[a.clone()]), Err(MvError::Config(_))));
    let short = vec![(1.0, 2.0)];
    assert!(matches!(
        defect_proxy(&[a, short]),
        Err(MvError::Shape { .. })
    ));
}

#[test]
fn csv_row_matches_header_shape() {
    assert_eq!(
        CSV_HEADER,
        "t,e_kin,e_elastic,e_exchange,e_penalty,d_visc,d_hyper,d_llg,work_ext,residual,max_abs_M,div_u_linf,div_F_l2"
    );
    let ledger = EnergyLedger::<f64>::zero(0.25);
    let row = csv_row(&ledger, 1e-8, 1.0, 0.0, 0.0);
    assert_eq!(row.matches(',').count(), CSV_HEADER.matches(',').count());
    assert!(row.starts_with("2.5000000000000000e-1,"));
    for field in row.split(',') {
        assert!(field.parse::<f64>().is_ok(), "field {field}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dissipation_increments_are_nonnegative(seed in any::<u64>()) {
        let d = unit(12);
        let mut rng = SplitMix64::new(seed);
        let mut s_old = StateSnapshot::rest(d);
        let mut s_new = StateSnapshot::rest(d);
        for c in 0..3 {
            for k in 0..d.nx * d.ny {
                s_old.m.comps[c][k] = rng.next_sym::<f64>();
                s_new.m.comps[c][k] = rng.next_sym::<f64>();
            }
        }
        s_new.u = VelocityField::from_stream_function(d, |x, y| {
            0.2 * (PI * x).sin().powi(2) * (PI * y).sin().powi(2)
        });
        let mut ledger = EnergyLedger::zero(0.0);
        accumulate_dissipation(
            &mut ledger,
            &s_old,
            &s_new,
            1e-3,
            AdvectionMode::Central,
            true,
            1e-2,
            None,
        );
        prop_assert!(ledger.d_visc >= 0.0);
        prop_assert!(ledger.d_hyper >= -1e-12);
        prop_assert!(ledger.d_llg >= 0.0);
    }

    #[test]
    fn energies_are_nonnegative(seed in any::<u64>()) {
        let d = unit(10);
        let mut rng = SplitMix64::new(seed);
        let mut state = StateSnapshot::rest(d);
        for c in 0..3 {
            for k in 0..d.nx * d.ny {
                state.m.comps[c][k] = 2.0 * rng.next_sym::<f64>();
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                for v in state.f.comps[a][b].iter_mut() {
                    *v = rng.next_sym::<f64>();
                }
            }
        }
        let e = total_energy(&state, 1e-2);
        prop_assert!(e.e_kin >= 0.0);
        prop_assert!(e.e_elastic >= 0.0);
        prop_assert!(e.e_exchange >= -1e-12);
        prop_assert!(e.e_penalty >= 0.0);
    }
}
