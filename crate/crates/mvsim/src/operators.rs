//! Discrete differential operators on the staggered grid.
//!
//! Boundary conventions:
//! - NeumannZero: mirror ghosts (zero normal derivative), used for M, p, F.
//! - VelocityClamped: wall faces are zero and tangential ghosts reflect oddly,
//!   so the wall value of every velocity component is zero.
//! - ExtrapolateFirstOrder: linear extrapolation ghosts, used to close
//!   advection stencils for F where no boundary condition is required.
//!
//! The velocity-gradient convention is the row gradient
//! (jacobian(u))_ab = d_b u_a; see `jacobian` for why.

use crate::fields::{DomainSpec, Layout, MatrixField, ScalarField, Vec3Field, VelocityField};
use crate::parallel::parallel_enabled;
use crate::real::Real;
use rayon::prelude::*;

/// Runs an elementwise per-row kernel over a cell-centered component,
/// parallel across rows when worker threads are enabled. The kernel writes
/// one row of length ny; the output is bitwise independent of the thread
/// count.
fn for_each_row<R: Real>(out: &mut [R], ny: usize, kernel: impl Fn(usize, &mut [R]) + Sync) {
    if parallel_enabled() {
        out.par_chunks_mut(ny)
            .enumerate()
            .for_each(|(i, row)| kernel(i, row));
    } else {
        for (i, row) in out.chunks_mut(ny).enumerate() {
            kernel(i, row);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcMode {
    VelocityClamped,
    NeumannZero,
    ExtrapolateFirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvectionMode {
    Upwind,
    Central,
}

#[inline]
fn cell_ghost<R: Real>(data: &[R], nx: usize, ny: usize, i: isize, j: isize, mode: BcMode) -> R {
    let at = |i: usize, j: usize| data[i * ny + j];
    let inside =
        |i: isize, j: isize| at(i.clamp(0, nx as isize - 1) as usize, j.clamp(0, ny as isize - 1) as usize);
    match mode {
        BcMode::NeumannZero | BcMode::VelocityClamped => inside(i, j),
        BcMode::ExtrapolateFirstOrder => {
            let in_x = i >= 0 && i < nx as isize;
            let in_y = j >= 0 && j < ny as isize;
            if in_x && in_y {
                at(i as usize, j as usize)
            } else if in_y {
                if i < 0 {
                    R::two() * at(0, j as usize) - at(1, j as usize)
                } else {
                    R::two() * at(nx - 1, j as usize) - at(nx - 2, j as usize)
                }
            } else if in_x {
                if j < 0 {
                    R::two() * at(i as usize, 0) - at(i as usize, 1)
                } else {
                    R::two() * at(i as usize, ny - 1) - at(i as usize, ny - 2)
                }
            } else {
                inside(i, j)
            }
        }
    }
}

fn laplacian_cell_comp<R: Real>(
    data: &[R],
    domain: &DomainSpec<R>,
    mode: BcMode,
    out: &mut [R],
) {
    let (nx, ny) = (domain.nx, domain.ny);
    let ihx2 = R::one() / (domain.hx * domain.hx);
    let ihy2 = R::one() / (domain.hy * domain.hy);
    for_each_row(out, ny, |i, row| {
        for (j, dst) in row.iter_mut().enumerate() {
            let c = data[i * ny + j];
            let e = cell_ghost(data, nx, ny, i as isize + 1, j as isize, mode);
            let w = cell_ghost(data, nx, ny, i as isize - 1, j as isize, mode);
            let n = cell_ghost(data, nx, ny, i as isize, j as isize + 1, mode);
            let s = cell_ghost(data, nx, ny, i as isize, j as isize - 1, mode);
            *dst = (e + w - R::two() * c) * ihx2 + (n + s - R::two() * c) * ihy2;
        }
    });
}

/// Five-point Laplacian of a cell-centered scalar field.
pub fn laplacian_scalar<R: Real>(f: &ScalarField<R>, mode: BcMode) -> ScalarField<R> {
    assert_eq!(f.layout, Layout::CellCenter, "laplacian_scalar needs cell layout");
    let mut out = ScalarField::new(f.domain, Layout::CellCenter);
    laplacian_cell_comp(&f.data, &f.domain, mode, &mut out.data);
    out
}

/// Componentwise five-point Laplacian of a cell-centered 3-vector field.
pub fn laplacian_vec3<R: Real>(m: &Vec3Field<R>, mode: BcMode) -> Vec3Field<R> {
    let mut out = Vec3Field::new(m.domain);
    for c in 0..3 {
        laplacian_cell_comp(&m.comps[c], &m.domain, mode, &mut out.comps[c]);
    }
    out
}

/// Componentwise five-point Laplacian of a cell-centered matrix field.
pub fn laplacian_matrix<R: Real>(f: &MatrixField<R>, mode: BcMode) -> MatrixField<R> {
    let mut out = MatrixField::new(f.domain);
    for a in 0..2 {
        for b in 0..2 {
            laplacian_cell_comp(&f.comps[a][b], &f.domain, mode, &mut out.comps[a][b]);
        }
    }
    out
}

/// Clamped-wall Laplacian of a MAC velocity. Wall faces stay zero; tangential
/// ghosts reflect oddly so the interpolated wall value of each component is
/// zero.
pub fn laplacian_velocity<R: Real>(vel: &VelocityField<R>) -> VelocityField<R> {
    let d = vel.domain;
    let (nx, ny) = (d.nx, d.ny);
    let ihx2 = R::one() / (d.hx * d.hx);
    let ihy2 = R::one() / (d.hy * d.hy);
    let mut out = VelocityField::new(d);
    for i in 1..nx {
        for j in 0..ny {
            let k = i * ny + j;
            let c = vel.u[k];
            let e = vel.u[(i + 1) * ny + j];
            let w = vel.u[(i - 1) * ny + j];
            let n = if j + 1 < ny { vel.u[k + 1] } else { -c };
            let s = if j > 0 { vel.u[k - 1] } else { -c };
            out.u[k] = (e + w - R::two() * c) * ihx2 + (n + s - R::two() * c) * ihy2;
        }
    }
    for i in 0..nx {
        for j in 1..ny {
            let k = i * (ny + 1) + j;
            let c = vel.v[k];
            let n = vel.v[k + 1];
            let s = vel.v[k - 1];
            let e = if i + 1 < nx { vel.v[(i + 1) * (ny + 1) + j] } else { -c };
            let w = if i > 0 { vel.v[(i - 1) * (ny + 1) + j] } else { -c };
            out.v[k] = (e + w - R::two() * c) * ihx2 + (n + s - R::two() * c) * ihy2;
        }
    }
    out
}

/// Triple application of the clamped Laplacian, re-imposing the clamped
/// boundary between applications.
pub fn trilaplacian<R: Real>(vel: &VelocityField<R>) -> VelocityField<R> {
    laplacian_velocity(&laplacian_velocity(&laplacian_velocity(vel)))
}

/// Face gradient of a cell-centered scalar; boundary faces are zero.
pub fn gradient_scalar<R: Real>(phi: &ScalarField<R>) -> VelocityField<R> {
    assert_eq!(phi.layout, Layout::CellCenter, "gradient_scalar needs cell layout");
    let d = phi.domain;
    let (nx, ny) = (d.nx, d.ny);
    let mut out = VelocityField::new(d);
    for i in 1..nx {
        for j in 0..ny {
            out.u[i * ny + j] = (phi.data[i * ny + j] - phi.data[(i - 1) * ny + j]) / d.hx;
        }
    }
    for i in 0..nx {
        for j in 1..ny {
            out.v[i * (ny + 1) + j] = (phi.data[i * ny + j] - phi.data[i * ny + j - 1]) / d.hy;
        }
    }
    out
}

/// Cell-centered MAC divergence of a velocity field.
pub fn divergence_vector<R: Real>(vel: &VelocityField<R>) -> ScalarField<R> {
    let d = vel.domain;
    let (nx, ny) = (d.nx, d.ny);
    let mut out = ScalarField::new(d, Layout::CellCenter);
    for i in 0..nx {
        for j in 0..ny {
            out.data[i * ny + j] = (vel.u[(i + 1) * ny + j] - vel.u[i * ny + j]) / d.hx
                + (vel.v[i * (ny + 1) + j + 1] - vel.v[i * (ny + 1) + j]) / d.hy;
        }
    }
    out
}

/// Averages a cell-centered component to grid corners with edge clamping.
fn corner_average<R: Real>(data: &[R], nx: usize, ny: usize) -> Vec<R> {
    let mut out = vec![R::zero(); (nx + 1) * (ny + 1)];
    let quarter = R::of(0.25);
    let at = |i: isize, j: isize| {
        data[(i.clamp(0, nx as isize - 1) as usize) * ny + j.clamp(0, ny as isize - 1) as usize]
    };
    for i in 0..=nx {
        for j in 0..=ny {
            let (ii, jj) = (i as isize, j as isize);
            out[i * (ny + 1) + j] = quarter
                * (at(ii - 1, jj - 1) + at(ii, jj - 1) + at(ii - 1, jj) + at(ii, jj));
        }
    }
    out
}

/// Column divergence (div S)_b = sum_a d_a S_ab of a cell-centered matrix
/// field, evaluated on velocity faces. Diagonal entries difference directly
/// cell-to-face; off-diagonal entries go through corner averages. Wall faces
/// are zero, consistent with clamped velocities.
pub fn divergence_matrix<R: Real>(s: &MatrixField<R>) -> VelocityField<R> {
    let d = s.domain;
    let (nx, ny) = (d.nx, d.ny);
    let mut out = VelocityField::new(d);
    let s00 = &s.comps[0][0];
    let s10 = corner_average(&s.comps[1][0], nx, ny);
    for i in 1..nx {
        for j in 0..ny {
            out.u[i * ny + j] = (s00[i * ny + j] - s00[(i - 1) * ny + j]) / d.hx
                + (s10[i * (ny + 1) + j + 1] - s10[i * (ny + 1) + j]) / d.hy;
        }
    }
    let s11 = &s.comps[1][1];
    let s01 = corner_average(&s.comps[0][1], nx, ny);
    for i in 0..nx {
        for j in 1..ny {
            out.v[i * (ny + 1) + j] = (s11[i * ny + j] - s11[i * ny + j - 1]) / d.hy
                + (s01[(i + 1) * (ny + 1) + j] - s01[i * (ny + 1) + j]) / d.hx;
        }
    }
    out
}

/// Cell-centered velocity gradient with the row-gradient convention
/// (jacobian(u))_ab = d_b u_a, the one under which the transport source
/// jacobian(u) F preserves the column divergence of F (and the elastic
/// production (jacobian(u) F, F) still matches the symmetric stress work).
/// Diagonal entries are exact face differences; mixed entries use
/// cell-centered averages with odd ghosts encoding the zero wall values.
pub fn jacobian<R: Real>(vel: &VelocityField<R>) -> MatrixField<R> {
    let d = vel.domain;
    let (nx, ny) = (d.nx, d.ny);
    let mut out = MatrixField::new(d);
    let uc = cell_centered_u(vel);
    let vc = cell_centered_v(vel);
    let two_hx = R::two() * d.hx;
    let two_hy = R::two() * d.hy;
    for i in 0..nx {
        for j in 0..ny {
            let k = i * ny + j;
            out.comps[0][0][k] = (vel.u[(i + 1) * ny + j] - vel.u[i * ny + j]) / d.hx;
            out.comps[1][1][k] = (vel.v[i * (ny + 1) + j + 1] - vel.v[i * (ny + 1) + j]) / d.hy;
            let un = if j + 1 < ny { uc[k + 1] } else { -uc[k] };
            let us = if j > 0 { uc[k - 1] } else { -uc[k] };
            out.comps[0][1][k] = (un - us) / two_hy;
            let ve = if i + 1 < nx { vc[(i + 1) * ny + j] } else { -vc[k] };
            let vw = if i > 0 { vc[(i - 1) * ny + j] } else { -vc[k] };
            out.comps[1][0][k] = (ve - vw) / two_hx;
        }
    }
    out
}

/// u-component averaged to cell centers.
pub fn cell_centered_u<R: Real>(vel: &VelocityField<R>) -> Vec<R> {
    let (nx, ny) = (vel.domain.nx, vel.domain.ny);
    let mut out = vec![R::zero(); nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            out[i * ny + j] = R::half() * (vel.u[i * ny + j] + vel.u[(i + 1) * ny + j]);
        }
    }
    out
}

/// v-component averaged to cell centers.
pub fn cell_centered_v<R: Real>(vel: &VelocityField<R>) -> Vec<R> {
    let (nx, ny) = (vel.domain.nx, vel.domain.ny);
    let mut out = vec![R::zero(); nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            out[i * ny + j] = R::half() * (vel.v[i * (ny + 1) + j] + vel.v[i * (ny + 1) + j + 1]);
        }
    }
    out
}

fn advect_cell_comp<R: Real>(
    vel: &VelocityField<R>,
    data: &[R],
    mode: AdvectionMode,
    bc: BcMode,
    out: &mut [R],
) {
    let d = vel.domain;
    let (nx, ny) = (d.nx, d.ny);
    match mode {
        AdvectionMode::Central => {
            // Flux-skew form: exactly skew-adjoint for MAC divergence-free u.
            let two_hx = R::two() * d.hx;
            let two_hy = R::two() * d.hy;
            for_each_row(out, ny, |i, row| {
                for (j, dst) in row.iter_mut().enumerate() {
                    let fc = data[i * ny + j];
                    let fe = cell_ghost(data, nx, ny, i as isize + 1, j as isize, bc);
                    let fw = cell_ghost(data, nx, ny, i as isize - 1, j as isize, bc);
                    let fn_ = cell_ghost(data, nx, ny, i as isize, j as isize + 1, bc);
                    let fs = cell_ghost(data, nx, ny, i as isize, j as isize - 1, bc);
                    let ue = vel.u[(i + 1) * ny + j];
                    let uw = vel.u[i * ny + j];
                    let vn = vel.v[i * (ny + 1) + j + 1];
                    let vs = vel.v[i * (ny + 1) + j];
                    *dst = (ue * (fe - fc) + uw * (fc - fw)) / two_hx
                        + (vn * (fn_ - fc) + vs * (fc - fs)) / two_hy;
                }
            });
        }
        AdvectionMode::Upwind => {
            for_each_row(out, ny, |i, row| {
                for (j, dst) in row.iter_mut().enumerate() {
                    let fc = data[i * ny + j];
                    let fe = cell_ghost(data, nx, ny, i as isize + 1, j as isize, bc);
                    let fw = cell_ghost(data, nx, ny, i as isize - 1, j as isize, bc);
                    let fn_ = cell_ghost(data, nx, ny, i as isize, j as isize + 1, bc);
                    let fs = cell_ghost(data, nx, ny, i as isize, j as isize - 1, bc);
                    let uc = R::half() * (vel.u[i * ny + j] + vel.u[(i + 1) * ny + j]);
                    let vc = R::half() * (vel.v[i * (ny + 1) + j] + vel.v[i * (ny + 1) + j + 1]);
                    let dx = if uc >= R::zero() { (fc - fw) / d.hx } else { (fe - fc) / d.hx };
                    let dy = if vc >= R::zero() { (fc - fs) / d.hy } else { (fn_ - fc) / d.hy };
                    *dst = uc * dx + vc * dy;
                }
            });
        }
    }
}

/// (u . grad) applied to a cell-centered scalar field.
pub fn advect_scalar<R: Real>(
    vel: &VelocityField<R>,
    f: &ScalarField<R>,
    mode: AdvectionMode,
    bc: BcMode,
) -> ScalarField<R> {
    assert_eq!(f.layout, Layout::CellCenter, "advect_scalar needs cell layout");
    let mut out = ScalarField::new(f.domain, Layout::CellCenter);
    advect_cell_comp(vel, &f.data, mode, bc, &mut out.data);
    out
}

/// (u . grad) applied componentwise to a cell-centered 3-vector field.
pub fn advect_vec3<R: Real>(
    vel: &VelocityField<R>,
    m: &Vec3Field<R>,
    mode: AdvectionMode,
    bc: BcMode,
) -> Vec3Field<R> {
    let mut out = Vec3Field::new(m.domain);
    for c in 0..3 {
        advect_cell_comp(vel, &m.comps[c], mode, bc, &mut out.comps[c]);
    }
    out
}

/// (u . grad) applied componentwise to a cell-centered matrix field.
pub fn advect_matrix<R: Real>(
    vel: &VelocityField<R>,
    f: &MatrixField<R>,
    mode: AdvectionMode,
    bc: BcMode,
) -> MatrixField<R> {
    let mut out = MatrixField::new(f.domain);
    for a in 0..2 {
        for b in 0..2 {
            advect_cell_comp(vel, &f.comps[a][b], mode, bc, &mut out.comps[a][b]);
        }
    }
    out
}

/// (u . grad) u evaluated on the staggered velocity layout. Wall faces stay
/// zero; tangential ghosts reflect oddly.
pub fn advect_velocity<R: Real>(vel: &VelocityField<R>, mode: AdvectionMode) -> VelocityField<R> {
    let d = vel.domain;
    let (nx, ny) = (d.nx, d.ny);
    let mut out = VelocityField::new(d);
    let two_hx = R::two() * d.hx;
    let two_hy = R::two() * d.hy;
    for i in 1..nx {
        for j in 0..ny {
            let k = i * ny + j;
            let c = vel.u[k];
            let e = vel.u[(i + 1) * ny + j];
            let w = vel.u[(i - 1) * ny + j];
            let n = if j + 1 < ny { vel.u[k + 1] } else { -c };
            let s = if j > 0 { vel.u[k - 1] } else { -c };
            let v_here = R::of(0.25)
                * (vel.v[(i - 1) * (ny + 1) + j]
                    + vel.v[i * (ny + 1) + j]
                    + vel.v[(i - 1) * (ny + 1) + j + 1]
                    + vel.v[i * (ny + 1) + j + 1]);
            let (dudx, dudy) = match mode {
                AdvectionMode::Central => ((e - w) / two_hx, (n - s) / two_hy),
                AdvectionMode::Upwind => (
                    if c >= R::zero() { (c - w) / d.hx } else { (e - c) / d.hx },
                    if v_here >= R::zero() { (c - s) / d.hy } else { (n - c) / d.hy },
                ),
            };
            out.u[k] = c * dudx + v_here * dudy;
        }
    }
    for i in 0..nx {
        for j in 1..ny {
            let k = i * (ny + 1) + j;
            let c = vel.v[k];
            let n = vel.v[k + 1];
            let s = vel.v[k - 1];
            let e = if i + 1 < nx { vel.v[(i + 1) * (ny + 1) + j] } else { -c };
            let w = if i > 0 { vel.v[(i - 1) * (ny + 1) + j] } else { -c };
            let u_here = R::of(0.25)
                * (vel.u[i * ny + j - 1]
                    + vel.u[(i + 1) * ny + j - 1]
                    + vel.u[i * ny + j]
                    + vel.u[(i + 1) * ny + j]);
            let (dvdx, dvdy) = match mode {
                AdvectionMode::Central => ((e - w) / two_hx, (n - s) / two_hy),
                AdvectionMode::Upwind => (
                    if u_here >= R::zero() { (c - w) / d.hx } else { (e - c) / d.hx },
                    if c >= R::zero() { (c - s) / d.hy } else { (n - c) / d.hy },
                ),
            };
            out.v[k] = u_here * dvdx + c * dvdy;
        }
    }
    out
}

/// Centered gradient of each component of a cell-centered 3-vector field with
/// NeumannZero ghosts; returns (d/dx M, d/dy M) cell-centered.
pub fn gradient_vec3<R: Real>(m: &Vec3Field<R>) -> (Vec3Field<R>, Vec3Field<R>) {
    let d = m.domain;
    let (nx, ny) = (d.nx, d.ny);
    let mut gx = Vec3Field::new(d);
    let mut gy = Vec3Field::new(d);
    let two_hx = R::two() * d.hx;
    let two_hy = R::two() * d.hy;
    for c in 0..3 {
        let data = &m.comps[c];
        for i in 0..nx {
            for j in 0..ny {
                let k = i * ny + j;
                let e = cell_ghost(data, nx, ny, i as isize + 1, j as isize, BcMode::NeumannZero);
                let w = cell_ghost(data, nx, ny, i as isize - 1, j as isize, BcMode::NeumannZero);
                let n = cell_ghost(data, nx, ny, i as isize, j as isize + 1, BcMode::NeumannZero);
                let s = cell_ghost(data, nx, ny, i as isize, j as isize - 1, BcMode::NeumannZero);
                gx.comps[c][k] = (e - w) / two_hx;
                gy.comps[c][k] = (n - s) / two_hy;
            }
        }
    }
    (gx, gy)
}
