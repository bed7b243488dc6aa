//! Stress assembly and the velocity step: explicit advection and stress
//! divergence, implicit viscosity (and optional hyperviscosity), then
//! pressure projection.

use crate::error::Result;
use crate::fields::{
    Layout, MatrixField, ScalarField, SimParams, StateSnapshot, Vec3Field, VelocityField,
};
use crate::incompressible::{helmholtz_solve, project_div_free_with, PoissonSolver};
use crate::operators::{
    advect_velocity, divergence_matrix, gradient_vec3, AdvectionMode,
};
use crate::real::Real;

/// Elastic Cauchy stress F F^T (symmetric positive semidefinite per cell).
pub fn elastic_stress<R: Real>(f: &MatrixField<R>) -> MatrixField<R> {
    let n = f.comps[0][0].len();
    let mut out = MatrixField::new(f.domain);
    for i in 0..2 {
        for j in 0..2 {
            let dst = &mut out.comps[i][j];
            for k in 0..n {
                dst[k] = f.comps[i][0][k] * f.comps[j][0][k] + f.comps[i][1][k] * f.comps[j][1][k];
            }
        }
    }
    out
}

/// Magnetic stress (grad M)^T grad M with entries sum_k d_a M_k d_b M_k.
pub fn magnetic_stress<R: Real>(m: &Vec3Field<R>) -> MatrixField<R> {
    let (gx, gy) = gradient_vec3(m);
    let n = m.comps[0].len();
    let mut out = MatrixField::new(m.domain);
    for k in 0..n {
        let gxk = gx.get(k);
        let gyk = gy.get(k);
        let xx = gxk[0] * gxk[0] + gxk[1] * gxk[1] + gxk[2] * gxk[2];
        let xy = gxk[0] * gyk[0] + gxk[1] * gyk[1] + gxk[2] * gyk[2];
        let yy = gyk[0] * gyk[0] + gyk[1] * gyk[1] + gyk[2] * gyk[2];
        out.comps[0][0][k] = xx;
        out.comps[0][1][k] = xy;
        out.comps[1][0][k] = xy;
        out.comps[1][1][k] = yy;
    }
    out
}

/// Kelvin body force (grad Hext)^T M, cell-centered components.
pub fn kelvin_force<R: Real>(
    hext: &Vec3Field<R>,
    m: &Vec3Field<R>,
) -> (ScalarField<R>, ScalarField<R>) {
    let (gx, gy) = gradient_vec3(hext);
    let n = m.comps[0].len();
    let mut fx = ScalarField::new(m.domain, Layout::CellCenter);
    let mut fy = ScalarField::new(m.domain, Layout::CellCenter);
    for k in 0..n {
        let mv = m.get(k);
        let gxk = gx.get(k);
        let gyk = gy.get(k);
        fx.data[k] = gxk[0] * mv[0] + gxk[1] * mv[1] + gxk[2] * mv[2];
        fy.data[k] = gyk[0] * mv[0] + gyk[1] * mv[1] + gyk[2] * mv[2];
    }
    (fx, fy)
}

/// Averages a cell-centered vector (fx, fy) onto velocity faces; wall faces
/// stay zero, consistent with clamped velocities.
pub fn cell_force_to_faces<R: Real>(
    fx: &ScalarField<R>,
    fy: &ScalarField<R>,
) -> VelocityField<R> {
    let d = fx.domain;
    let (nx, ny) = (d.nx, d.ny);
    let mut out = VelocityField::new(d);
    for i in 1..nx {
        for j in 0..ny {
            out.u[i * ny + j] = R::half() * (fx.data[(i - 1) * ny + j] + fx.data[i * ny + j]);
        }
    }
    for i in 0..nx {
        for j in 1..ny {
            out.v[i * (ny + 1) + j] = R::half() * (fy.data[i * ny + j - 1] + fy.data[i * ny + j]);
        }
    }
    out
}

/// One velocity step. Returns the projected velocity and the pressure.
/// `forcing` is an optional extra body force on faces (manufactured
/// solutions); `poisson` carries the warm-started pressure solver.
#[allow(clippy::too_many_arguments)]
pub fn momentum_step_full<R: Real>(
    state: &StateSnapshot<R>,
    dt: R,
    params: &SimParams<R>,
    hext: Option<&Vec3Field<R>>,
    adv: AdvectionMode,
    forcing: Option<&VelocityField<R>>,
    poisson: &mut PoissonSolver<R>,
) -> Result<(VelocityField<R>, ScalarField<R>)> {
    let stress = {
        let el = elastic_stress(&state.f);
        let mag = magnetic_stress(&state.m);
        let mut s = el;
        for a in 0..2 {
            for b in 0..2 {
                for k in 0..s.comps[a][b].len() {
                    let m = mag.comps[a][b][k];
                    s.comps[a][b][k] -= m;
                }
            }
        }
        s
    };
    let sdiv = divergence_matrix(&stress);
    let advected = advect_velocity(&state.u, adv);
    let mut rhs = state.u.clone();
    for k in 0..rhs.u.len() {
        rhs.u[k] += dt * (sdiv.u[k] - advected.u[k]);
    }
    for k in 0..rhs.v.len() {
        rhs.v[k] += dt * (sdiv.v[k] - advected.v[k]);
    }
    if let Some(h) = hext {
        let (fx, fy) = kelvin_force(h, &state.m);
        let kf = cell_force_to_faces(&fx, &fy);
        for k in 0..rhs.u.len() {
            rhs.u[k] += dt * kf.u[k];
        }
        for k in 0..rhs.v.len() {
            rhs.v[k] += dt * kf.v[k];
        }
    }
    if let Some(f) = forcing {
        for k in 0..rhs.u.len() {
            rhs.u[k] += dt * f.u[k];
        }
        for k in 0..rhs.v.len() {
            rhs.v[k] += dt * f.v[k];
        }
    }
    rhs.clamp_walls();
    let b = if params.hyperviscosity_on {
        dt * params.eps
    } else {
        R::zero()
    };
    let ustar = helmholtz_solve(&rhs, dt, b, params.helmholtz_tol)?;
    let (unew, phi) = project_div_free_with(poisson, &ustar, params.poisson_tol)?;
    let mut p = phi;
    for v in p.data.iter_mut() {
        *v = *v / dt;
    }
    Ok((unew, p))
}

/// Velocity step with the model's right-hand side only (no extra forcing).
pub fn momentum_step<R: Real>(
    state: &StateSnapshot<R>,
    dt: R,
    params: &SimParams<R>,
    hext: Option<&Vec3Field<R>>,
    adv: AdvectionMode,
) -> Result<(VelocityField<R>, ScalarField<R>)> {
    let mut poisson = PoissonSolver::new(state.u.domain);
    momentum_step_full(state, dt, params, hext, adv, None, &mut poisson)
}
