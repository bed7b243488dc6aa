//! Deformation-gradient transport, the characteristics oracle, divergence
//! monitoring, and mollified initial data.

use crate::error::{MvError, Result};
use crate::fields::{DomainSpec, FieldOps, MatrixField, VelocityField};
use crate::operators::{
    advect_matrix, divergence_matrix, jacobian, laplacian_matrix, AdvectionMode, BcMode,
};
use crate::real::Real;

/// One explicit transport step:
/// F+ = F + dt (-(u . grad) F + jacobian(u) F + f_diffusion lap F).
/// The source contracts as (jacobian(u) F)_ij = sum_k d_k u_i F_kj, the
/// convention under which the column divergence of F is a transported
/// quantity (and the elastic energy production matches the stress work).
pub fn transport_step<R: Real>(
    f: &MatrixField<R>,
    u: &VelocityField<R>,
    dt: R,
    f_diffusion: R,
    adv: AdvectionMode,
) -> MatrixField<R> {
    let advected = advect_matrix(u, f, adv, BcMode::ExtrapolateFirstOrder);
    let j = jacobian(u);
    let n = f.comps[0][0].len();
    let mut out = f.clone();
    for a in 0..2 {
        for b in 0..2 {
            let dst = &mut out.comps[a][b];
            for k in 0..n {
                let jf = j.comps[a][0][k] * f.comps[0][b][k] + j.comps[a][1][k] * f.comps[1][b][k];
                dst[k] += dt * (jf - advected.comps[a][b][k]);
            }
        }
    }
    if f_diffusion > R::zero() {
        let lap = laplacian_matrix(f, BcMode::NeumannZero);
        for a in 0..2 {
            for b in 0..2 {
                for k in 0..n {
                    out.comps[a][b][k] += dt * f_diffusion * lap.comps[a][b][k];
                }
            }
        }
    }
    out
}

fn mat_mul<R: Real>(a: [[R; 2]; 2], b: [[R; 2]; 2]) -> [[R; 2]; 2] {
    let mut c = [[R::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Reference solution of the transport equation by backward characteristics.
///
/// For each cell center x the pair (X, C) is integrated from s = t down to 0
/// with classical RK4, where dX/ds = u(s, X) and dC/ds = -C A(s, X) with
/// A_ab = d_b u_a (the matrix of the along-path ODE dF/ds = A F); then
/// F(t, x) = C(0) F0(X(0)). The sampler returns the velocity and its
/// gradient at arbitrary points.
pub fn characteristics_oracle<R: Real>(
    domain: DomainSpec<R>,
    f0: impl Fn(R, R) -> [[R; 2]; 2],
    field: impl Fn(R, R, R) -> ([R; 2], [[R; 2]; 2]),
    t: R,
    substeps: usize,
) -> Result<MatrixField<R>> {
    if substeps == 0 {
        return Err(MvError::Config("characteristics_oracle needs substeps >= 1".into()));
    }
    let mut out = MatrixField::new(domain);
    let ds = t / R::of(substeps as f64);
    for i in 0..domain.nx {
        for j in 0..domain.ny {
            let mut x = [domain.x_center(i), domain.y_center(j)];
            let mut c = [[R::one(), R::zero()], [R::zero(), R::one()]];
            let mut s = t;
            // Derivative of (X, C) along decreasing s with step -ds.
            let rhs = |s: R, x: [R; 2], c: [[R; 2]; 2]| {
                let (u, a) = field(s, x[0], x[1]);
                let mut dc = [[R::zero(); 2]; 2];
                let ca = mat_mul(c, a);
                for p in 0..2 {
                    for q in 0..2 {
                        dc[p][q] = -ca[p][q];
                    }
                }
                (u, dc)
            };
            for _ in 0..substeps {
                let h = -ds;
                let (k1x, k1c) = rhs(s, x, c);
                let half = R::half() * h;
                let x2 = [x[0] + half * k1x[0], x[1] + half * k1x[1]];
                let c2 = add_scaled(c, k1c, half);
                let (k2x, k2c) = rhs(s + half, x2, c2);
                let x3 = [x[0] + half * k2x[0], x[1] + half * k2x[1]];
                let c3 = add_scaled(c, k2c, half);
                let (k3x, k3c) = rhs(s + half, x3, c3);
                let x4 = [x[0] + h * k3x[0], x[1] + h * k3x[1]];
                let c4 = add_scaled(c, k3c, h);
                let (k4x, k4c) = rhs(s + h, x4, c4);
                let sixth = h / R::of(6.0);
                for p in 0..2 {
                    x[p] += sixth * (k1x[p] + R::two() * (k2x[p] + k3x[p]) + k4x[p]);
                    for q in 0..2 {
                        c[p][q] += sixth
                            * (k1c[p][q] + R::two() * (k2c[p][q] + k3c[p][q]) + k4c[p][q]);
                    }
                }
                s += h;
            }
            let f0v = f0(x[0], x[1]);
            let fv = mat_mul(c, f0v);
            let k = i * domain.ny + j;
            for p in 0..2 {
                for q in 0..2 {
                    out.comps[p][q][k] = fv[p][q];
                }
            }
        }
    }
    Ok(out)
}

fn add_scaled<R: Real>(c: [[R; 2]; 2], d: [[R; 2]; 2], s: R) -> [[R; 2]; 2] {
    let mut out = c;
    for p in 0..2 {
        for q in 0..2 {
            out[p][q] = c[p][q] + s * d[p][q];
        }
    }
    out
}

/// (l2, linf) norms of the column divergence of F.
pub fn div_matrix_monitor<R: Real>(f: &MatrixField<R>) -> (R, R) {
    let div = divergence_matrix(f);
    (div.l2_norm(), div.linf_norm())
}

/// Componentwise discrete mollification with a compactly supported bump
/// kernel of radius delta; near-wall cells use reflected extension. A radius
/// below the grid spacing degenerates to the identity.
pub fn mollify_initial<R: Real>(f0: &MatrixField<R>, delta: R) -> Result<MatrixField<R>> {
    if !(delta > R::zero()) {
        return Err(MvError::Config("mollify_initial needs delta > 0".into()));
    }
    let d = f0.domain;
    if delta < d.hx.min(d.hy) {
        return Ok(f0.clone());
    }
    let rx = (delta / d.hx).to_f64().unwrap_or(0.0).floor() as isize;
    let ry = (delta / d.hy).to_f64().unwrap_or(0.0).floor() as isize;
    let mut weights = Vec::new();
    let mut total = R::zero();
    for di in -rx..=rx {
        for dj in -ry..=ry {
            let x = R::of(di as f64) * d.hx / delta;
            let y = R::of(dj as f64) * d.hy / delta;
            let r2 = x * x + y * y;
            if r2 < R::one() {
                let w = (-R::one() / (R::one() - r2)).exp();
                weights.push((di, dj, w));
                total += w;
            }
        }
    }
    for (_, _, w) in weights.iter_mut() {
        *w = *w / total;
    }
    let (nx, ny) = (d.nx as isize, d.ny as isize);
    let reflect = |i: isize, n: isize| -> usize {
        let mut i = i;
        if i < 0 {
            i = -i - 1;
        }
        if i >= n {
            i = 2 * n - 1 - i;
        }
        i.clamp(0, n - 1) as usize
    };
    let mut out = MatrixField::new(d);
    for a in 0..2 {
        for b in 0..2 {
            let src = &f0.comps[a][b];
            let dst = &mut out.comps[a][b];
            for i in 0..d.nx {
                for j in 0..d.ny {
                    let mut acc = R::zero();
                    for (di, dj, w) in &weights {
                        let si = reflect(i as isize + di, nx);
                        let sj = reflect(j as isize + dj, ny);
                        acc += *w * src[si * d.ny + sj];
                    }
                    dst[i * d.ny + j] = acc;
                }
            }
        }
    }
    Ok(out)
}
