//! Energy components, cumulative dissipation, the energy-inequality
//! residual, and the eps-sweep diagnostics.
//!
//! Instantaneous energies are evaluated as the quadratic forms induced by the
//! discrete operators actually used by the stepper (e.g. the exchange energy
//! is (1/2)(-lap M, M)), so that the discrete identity telescopes and the
//! residual measures time-discretization error rather than a fixed spatial
//! mismatch.
//!
//! The residual combines the momentum identity at weight one with the
//! magnetization identity at weight one half. At those weights the penalty
//! enters the conserved combination with coefficient (8 eps)^-1; the reported
//! e_penalty column keeps the (4 eps)^-1 normalization of the energy
//! inequality, and the residual uses half of it.

use crate::error::{MvError, Result};
use crate::fields::{fmt_real, FieldOps, StateSnapshot, Vec3Field, VelocityField};
use crate::magnetization::{cross, sphere_defect};
use crate::operators::{
    advect_vec3, laplacian_vec3, laplacian_velocity, trilaplacian, AdvectionMode, BcMode,
};
use crate::real::Real;
use std::fmt::Write as _;

pub const CSV_HEADER: &str =
    "t,e_kin,e_elastic,e_exchange,e_penalty,d_visc,d_hyper,d_llg,work_ext,residual,max_abs_M,div_u_linf,div_F_l2";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLedger<R: Real> {
    pub t: R,
    pub e_kin: R,
    pub e_elastic: R,
    pub e_exchange: R,
    pub e_penalty: R,
    pub d_visc: R,
    pub d_hyper: R,
    pub d_llg: R,
    /// Zeeman power (Hext, dM/dt), the work term of the dissipative
    /// formulation; reported, not used by the residual.
    pub work_zeeman: R,
    /// Kelvin-force power ((grad Hext)^T M, u).
    pub work_kelvin: R,
    /// Work pairing consistent with the discrete identity:
    /// kelvin power plus (-(M x (M x Hext)), V).
    pub work_residual: R,
}

impl<R: Real> EnergyLedger<R> {
    pub fn zero(t: R) -> Self {
        let z = R::zero();
        Self {
            t,
            e_kin: z,
            e_elastic: z,
            e_exchange: z,
            e_penalty: z,
            d_visc: z,
            d_hyper: z,
            d_llg: z,
            work_zeeman: z,
            work_kelvin: z,
            work_residual: z,
        }
    }

    /// Conserved combination: kinetic + elastic + exchange + half penalty.
    pub fn conserved_energy(&self) -> R {
        self.e_kin + self.e_elastic + self.e_exchange + R::half() * self.e_penalty
    }

    pub fn dissipation(&self) -> R {
        self.d_visc + self.d_hyper + self.d_llg
    }

    pub fn work_ext(&self) -> R {
        self.work_zeeman + self.work_kelvin
    }
}

fn quadratic_form_velocity<R: Real>(op: &VelocityField<R>, u: &VelocityField<R>) -> R {
    let vol = u.domain.cell_volume();
    let mut acc = R::zero();
    for (a, b) in op.u.iter().zip(&u.u) {
        acc += *a * *b;
    }
    for (a, b) in op.v.iter().zip(&u.v) {
        acc += *a * *b;
    }
    acc * vol
}

/// Exchange energy (1/2)(-lap M, M) as the scheme-consistent quadratic form.
pub fn exchange_energy<R: Real>(m: &Vec3Field<R>) -> R {
    let lap = laplacian_vec3(m, BcMode::NeumannZero);
    let vol = m.domain.cell_volume();
    let mut acc = R::zero();
    for c in 0..3 {
        for (l, v) in lap.comps[c].iter().zip(&m.comps[c]) {
            acc -= *l * *v;
        }
    }
    R::half() * acc * vol
}

/// Instantaneous energy components of a state (dissipation fields zero).
pub fn total_energy<R: Real>(state: &StateSnapshot<R>, eps: R) -> EnergyLedger<R> {
    let mut ledger = EnergyLedger::zero(state.t);
    let un = state.u.l2_norm();
    ledger.e_kin = R::half() * un * un;
    let fnorm = state.f.l2_norm();
    ledger.e_elastic = R::half() * fnorm * fnorm;
    ledger.e_exchange = exchange_energy(&state.m);
    let (_, _, pen) = sphere_defect(&state.m, eps);
    ledger.e_penalty = pen;
    ledger
}

/// Inputs of the sweep concentration proxy for one state:
/// (||F||^2, ||grad M||^2) with the scheme-consistent quadratic forms.
pub fn sphere_defect_trace<R: Real>(state: &StateSnapshot<R>) -> (R, R) {
    let fnorm = state.f.l2_norm();
    (fnorm * fnorm, R::two() * exchange_energy(&state.m))
}

/// Accumulates dissipation and work over one step (rectangle rule). The
/// material derivative of M is rebuilt with the same advection stencil and
/// old velocity the stepper used, so the increment equals the stepper's
/// (1/2) dt |V|^2 exactly.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_dissipation<R: Real>(
    ledger: &mut EnergyLedger<R>,
    state_old: &StateSnapshot<R>,
    state_new: &StateSnapshot<R>,
    dt: R,
    adv: AdvectionMode,
    hyper_on: bool,
    eps: R,
    hext: Option<&Vec3Field<R>>,
) {
    let vol = state_old.u.domain.cell_volume();
    let lap = laplacian_velocity(&state_new.u);
    ledger.d_visc += -dt * quadratic_form_velocity(&lap, &state_new.u);
    if hyper_on {
        let tri = trilaplacian(&state_new.u);
        ledger.d_hyper += -dt * eps * quadratic_form_velocity(&tri, &state_new.u);
    }
    let advected = advect_vec3(&state_old.u, &state_old.m, adv, BcMode::NeumannZero);
    let inv_dt = R::one() / dt;
    let mut vsq = R::zero();
    let n = state_old.m.comps[0].len();
    let mut v = Vec3Field::new(state_old.m.domain);
    for c in 0..3 {
        for k in 0..n {
            let rate = (state_new.m.comps[c][k] - state_old.m.comps[c][k]) * inv_dt
                + advected.comps[c][k];
            v.comps[c][k] = rate;
            vsq += rate * rate;
        }
    }
    ledger.d_llg += R::half() * dt * vsq * vol;
    if let Some(h) = hext {
        let mut zeeman = R::zero();
        let mut drive = R::zero();
        for k in 0..n {
            let hv = h.get(k);
            let dm = [
                state_new.m.comps[0][k] - state_old.m.comps[0][k],
                state_new.m.comps[1][k] - state_old.m.comps[1][k],
                state_new.m.comps[2][k] - state_old.m.comps[2][k],
            ];
            zeeman += hv[0] * dm[0] + hv[1] * dm[1] + hv[2] * dm[2];
            let mv = state_old.m.get(k);
            let mmh = cross(mv, cross(mv, hv));
            let vv = v.get(k);
            drive -= mmh[0] * vv[0] + mmh[1] * vv[1] + mmh[2] * vv[2];
        }
        ledger.work_zeeman += zeeman * vol;
        ledger.work_residual += dt * drive * vol;
        let (fx, fy) = crate::momentum::kelvin_force(h, &state_old.m);
        let kf = crate::momentum::cell_force_to_faces(&fx, &fy);
        let power = dt * quadratic_form_velocity(&kf, &state_new.u);
        ledger.work_kelvin += power;
        ledger.work_residual += power;
    }
    ledger.t = state_new.t;
}

/// Residual of the discrete energy identity:
/// [E(t) + D(0,t)] - [E(0) + W(0,t)], nonpositive up to discretization error.
pub fn energy_residual<R: Real>(ledger: &EnergyLedger<R>, ledger0: &EnergyLedger<R>) -> R {
    ledger.conserved_energy() + ledger.dissipation()
        - ledger0.conserved_energy()
        - ledger.work_residual
}

/// Least-squares slope of log(defect) against log(eps).
pub fn eps_sweep_order<R: Real>(points: &[(R, R)]) -> Result<R> {
    if points.len() < 3 {
        return Err(MvError::Config(format!(
            "eps sweep needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = R::of(points.len() as f64);
    let mut sx = R::zero();
    let mut sy = R::zero();
    let mut sxx = R::zero();
    let mut sxy = R::zero();
    for (eps, defect) in points {
        let x = eps.ln();
        let y = defect.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// Concentration proxy between consecutive eps levels: per output time,
/// | ||F||^2 - ||F'||^2 | + | ||grad M||^2 - ||grad M'||^2 | computed from
/// per-run traces of those squared norms.
pub fn defect_proxy<R: Real>(traces: &[Vec<(R, R)>]) -> Result<Vec<Vec<R>>> {
    if traces.len() < 2 {
        return Err(MvError::Config("defect_proxy needs at least 2 runs".into()));
    }
    let len = traces[0].len();
    for t in traces {
        if t.len() != len {
            return Err(MvError::Shape {
                context: "defect_proxy".into(),
                expected: format!("{len} records per run"),
                got: format!("{}", t.len()),
            });
        }
    }
    let mut out = Vec::with_capacity(traces.len() - 1);
    for w in traces.windows(2) {
        let mut row = Vec::with_capacity(len);
        for k in 0..len {
            let (f0, g0) = w[0][k];
            let (f1, g1) = w[1][k];
            row.push((f0 - f1).abs() + (g0 - g1).abs());
        }
        out.push(row);
    }
    Ok(out)
}

/// One diagnostics CSV row matching CSV_HEADER.
#[allow(clippy::too_many_arguments)]
pub fn csv_row<R: Real>(
    ledger: &EnergyLedger<R>,
    residual: R,
    max_abs_m: R,
    div_u_linf: R,
    div_f_l2: R,
) -> String {
    let mut s = String::new();
    let cols = [
        ledger.t,
        ledger.e_kin,
        ledger.e_elastic,
        ledger.e_exchange,
        ledger.e_penalty,
        ledger.d_visc,
        ledger.d_hyper,
        ledger.d_llg,
        ledger.work_ext(),
        residual,
        max_abs_m,
        div_u_linf,
        div_f_l2,
    ];
    for (i, c) in cols.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{}", fmt_real(*c));
    }
    s
}
