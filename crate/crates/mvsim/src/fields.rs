//! Discrete domain, field containers, inner products, and snapshot file I/O.
//!
//! Velocity lives on a MAC staggered grid (u on x-faces, v on y-faces);
//! pressure, the deformation gradient F, and the magnetization M are
//! cell-centered. Quadrature is the midpoint rule: every node carries one
//! cell volume hx*hy.

use crate::error::{MvError, Result};
use crate::real::Real;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// Axis-aligned rectangular domain [0,Lx] x [0,Ly] split into nx x ny cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec<R: Real> {
    pub lx: R,
    pub ly: R,
    pub nx: usize,
    pub ny: usize,
    pub hx: R,
    pub hy: R,
}

impl<R: Real> DomainSpec<R> {
    pub fn new(lx: R, ly: R, nx: usize, ny: usize) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(MvError::Config(format!(
                "grid must be at least 4x4, got {nx}x{ny}"
            )));
        }
        if !(lx > R::zero()) || !(ly > R::zero()) {
            return Err(MvError::Config("domain side lengths must be positive".into()));
        }
        Ok(Self {
            lx,
            ly,
            nx,
            ny,
            hx: lx / R::of(nx as f64),
            hy: ly / R::of(ny as f64),
        })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(R::one(), R::one(), n, n)
    }

    /// Cell volume used by the midpoint quadrature rule.
    pub fn cell_volume(&self) -> R {
        self.hx * self.hy
    }

    /// x-coordinate of the center of cell column i.
    pub fn x_center(&self, i: usize) -> R {
        (R::of(i as f64) + R::half()) * self.hx
    }

    /// y-coordinate of the center of cell row j.
    pub fn y_center(&self, j: usize) -> R {
        (R::of(j as f64) + R::half()) * self.hy
    }

    /// x-coordinate of x-face i (i in 0..=nx).
    pub fn x_face(&self, i: usize) -> R {
        R::of(i as f64) * self.hx
    }

    /// y-coordinate of y-face j (j in 0..=ny).
    pub fn y_face(&self, j: usize) -> R {
        R::of(j as f64) * self.hy
    }
}

/// Node layout of a scalar quantity on the staggered grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    CellCenter,
    XFace,
    YFace,
}

impl Layout {
    pub fn dims(self, nx: usize, ny: usize) -> (usize, usize) {
        match self {
            Layout::CellCenter => (nx, ny),
            Layout::XFace => (nx + 1, ny),
            Layout::YFace => (nx, ny + 1),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Layout::CellCenter => "cell",
            Layout::XFace => "xface",
            Layout::YFace => "yface",
        }
    }

    pub fn from_tag(s: &str) -> Result<Self> {
        match s {
            "cell" => Ok(Layout::CellCenter),
            "xface" => Ok(Layout::XFace),
            "yface" => Ok(Layout::YFace),
            other => Err(MvError::Config(format!("unknown layout tag '{other}'"))),
        }
    }
}

/// One scalar value per node of the chosen layout, row-major in i (x index).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<R: Real> {
    pub domain: DomainSpec<R>,
    pub layout: Layout,
    pub data: Vec<R>,
}

impl<R: Real> ScalarField<R> {
    pub fn new(domain: DomainSpec<R>, layout: Layout) -> Self {
        let (ni, nj) = layout.dims(domain.nx, domain.ny);
        Self {
            domain,
            layout,
            data: vec![R::zero(); ni * nj],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.layout.dims(self.domain.nx, self.domain.ny)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        let (_, nj) = self.dims();
        i * nj + j
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> R {
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: R) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn from_fn(domain: DomainSpec<R>, layout: Layout, f: impl Fn(R, R) -> R) -> Self {
        let mut out = Self::new(domain, layout);
        let (ni, nj) = out.dims();
        for i in 0..ni {
            for j in 0..nj {
                let (x, y) = match layout {
                    Layout::CellCenter => (domain.x_center(i), domain.y_center(j)),
                    Layout::XFace => (domain.x_face(i), domain.y_center(j)),
                    Layout::YFace => (domain.x_center(i), domain.y_face(j)),
                };
                let k = i * nj + j;
                out.data[k] = f(x, y);
            }
        }
        out
    }

    pub fn mean(&self) -> R {
        let n = R::of(self.data.len() as f64);
        self.data.iter().copied().sum::<R>() / n
    }
}

/// MAC velocity: u on x-faces ((nx+1) x ny), v on y-faces (nx x (ny+1)).
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField<R: Real> {
    pub domain: DomainSpec<R>,
    pub u: Vec<R>,
    pub v: Vec<R>,
}

impl<R: Real> VelocityField<R> {
    pub fn new(domain: DomainSpec<R>) -> Self {
        Self {
            domain,
            u: vec![R::zero(); (domain.nx + 1) * domain.ny],
            v: vec![R::zero(); domain.nx * (domain.ny + 1)],
        }
    }

    #[inline]
    pub fn iu(&self, i: usize, j: usize) -> usize {
        i * self.domain.ny + j
    }

    #[inline]
    pub fn iv(&self, i: usize, j: usize) -> usize {
        i * (self.domain.ny + 1) + j
    }

    #[inline]
    pub fn u_at(&self, i: usize, j: usize) -> R {
        self.u[i * self.domain.ny + j]
    }

    #[inline]
    pub fn v_at(&self, i: usize, j: usize) -> R {
        self.v[i * (self.domain.ny + 1) + j]
    }

    /// Builds an exactly discretely divergence-free field from a stream
    /// function sampled at cell corners: u = dpsi/dy, v = -dpsi/dx.
    pub fn from_stream_function(domain: DomainSpec<R>, psi: impl Fn(R, R) -> R) -> Self {
        let (nx, ny) = (domain.nx, domain.ny);
        let mut out = Self::new(domain);
        for i in 0..=nx {
            for j in 0..ny {
                let x = domain.x_face(i);
                let k = out.iu(i, j);
                out.u[k] = (psi(x, domain.y_face(j + 1)) - psi(x, domain.y_face(j))) / domain.hy;
            }
        }
        for i in 0..nx {
            for j in 0..=ny {
                let y = domain.y_face(j);
                let k = out.iv(i, j);
                out.v[k] =
                    -(psi(domain.x_face(i + 1), y) - psi(domain.x_face(i), y)) / domain.hx;
            }
        }
        out
    }

    /// Zeroes the wall faces (the clamped boundary condition on the normal
    /// velocity components).
    pub fn clamp_walls(&mut self) {
        let (nx, ny) = (self.domain.nx, self.domain.ny);
        for j in 0..ny {
            self.u[j] = R::zero();
            self.u[nx * ny + j] = R::zero();
        }
        for i in 0..nx {
            self.v[i * (ny + 1)] = R::zero();
            self.v[i * (ny + 1) + ny] = R::zero();
        }
    }
}

/// Three cell-centered components (M1, M2, M3).
#[derive(Debug, Clone, PartialEq)]
pub struct Vec3Field<R: Real> {
    pub domain: DomainSpec<R>,
    pub comps: [Vec<R>; 3],
}

impl<R: Real> Vec3Field<R> {
    pub fn new(domain: DomainSpec<R>) -> Self {
        let n = domain.nx * domain.ny;
        Self {
            domain,
            comps: [vec![R::zero(); n], vec![R::zero(); n], vec![R::zero(); n]],
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.domain.ny + j
    }

    pub fn constant(domain: DomainSpec<R>, m: [R; 3]) -> Self {
        let mut out = Self::new(domain);
        for c in 0..3 {
            out.comps[c].fill(m[c]);
        }
        out
    }

    pub fn from_fn(domain: DomainSpec<R>, f: impl Fn(R, R) -> [R; 3]) -> Self {
        let mut out = Self::new(domain);
        for i in 0..domain.nx {
            for j in 0..domain.ny {
                let m = f(domain.x_center(i), domain.y_center(j));
                let k = i * domain.ny + j;
                for c in 0..3 {
                    out.comps[c][k] = m[c];
                }
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, k: usize) -> [R; 3] {
        [self.comps[0][k], self.comps[1][k], self.comps[2][k]]
    }

    /// |M|^2 per cell.
    pub fn norm_sq(&self) -> Vec<R> {
        let n = self.comps[0].len();
        let mut s = vec![R::zero(); n];
        for c in 0..3 {
            for k in 0..n {
                s[k] += self.comps[c][k] * self.comps[c][k];
            }
        }
        s
    }
}

/// Four cell-centered components F_ij, i, j in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField<R: Real> {
    pub domain: DomainSpec<R>,
    pub comps: [[Vec<R>; 2]; 2],
}

impl<R: Real> MatrixField<R> {
    pub fn new(domain: DomainSpec<R>) -> Self {
        let n = domain.nx * domain.ny;
        let z = || vec![R::zero(); n];
        Self {
            domain,
            comps: [[z(), z()], [z(), z()]],
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.domain.ny + j
    }

    pub fn identity(domain: DomainSpec<R>) -> Self {
        let mut out = Self::new(domain);
        out.comps[0][0].fill(R::one());
        out.comps[1][1].fill(R::one());
        out
    }

    pub fn from_fn(domain: DomainSpec<R>, f: impl Fn(R, R) -> [[R; 2]; 2]) -> Self {
        let mut out = Self::new(domain);
        for i in 0..domain.nx {
            for j in 0..domain.ny {
                let m = f(domain.x_center(i), domain.y_center(j));
                let k = i * domain.ny + j;
                for a in 0..2 {
                    for b in 0..2 {
                        out.comps[a][b][k] = m[a][b];
                    }
                }
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, k: usize) -> [[R; 2]; 2] {
        [
            [self.comps[0][0][k], self.comps[0][1][k]],
            [self.comps[1][0][k], self.comps[1][1][k]],
        ]
    }
}

/// Time-stamped solver state.
#[derive(Debug, Clone)]
pub struct StateSnapshot<R: Real> {
    pub t: R,
    pub u: VelocityField<R>,
    pub p: ScalarField<R>,
    pub f: MatrixField<R>,
    pub m: Vec3Field<R>,
}

impl<R: Real> StateSnapshot<R> {
    pub fn rest(domain: DomainSpec<R>) -> Self {
        Self {
            t: R::zero(),
            u: VelocityField::new(domain),
            p: ScalarField::new(domain, Layout::CellCenter),
            f: MatrixField::identity(domain),
            m: Vec3Field::constant(domain, [R::zero(), R::zero(), R::one()]),
        }
    }
}

/// Time-stepping and solver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams<R: Real> {
    pub eps: R,
    pub f_diffusion: R,
    pub dt: R,
    pub t_end: R,
    pub cfl_safety: R,
    pub poisson_tol: R,
    pub helmholtz_tol: R,
    pub hyperviscosity_on: bool,
    /// Parameter k of the cut-off Theta_k; zero disables the cut-off.
    pub cutoff_k: R,
}

impl<R: Real> SimParams<R> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > R::zero()) {
            return Err(MvError::Config("eps must be positive".into()));
        }
        if !(self.dt > R::zero()) {
            return Err(MvError::Config("dt must be positive".into()));
        }
        if !(self.poisson_tol > R::zero()) || !(self.helmholtz_tol > R::zero()) {
            return Err(MvError::Config("solver tolerances must be positive".into()));
        }
        if !(self.cfl_safety > R::zero()) || self.cfl_safety > R::one() {
            return Err(MvError::Config("cfl_safety must lie in (0, 1]".into()));
        }
        if self.f_diffusion < R::zero() {
            return Err(MvError::Config("f_diffusion must be nonnegative".into()));
        }
        if self.cutoff_k < R::zero() {
            return Err(MvError::Config("cutoff_k must be nonnegative".into()));
        }
        Ok(())
    }
}

impl<R: Real> Default for SimParams<R> {
    fn default() -> Self {
        Self {
            eps: R::of(1e-2),
            f_diffusion: R::zero(),
            dt: R::of(1e-4),
            t_end: R::of(0.1),
            cfl_safety: R::of(0.9),
            poisson_tol: R::of(1e-10),
            helmholtz_tol: R::of(1e-12),
            hyperviscosity_on: false,
            cutoff_k: R::zero(),
        }
    }
}

fn check_same<R: Real>(context: &str, a: &DomainSpec<R>, b: &DomainSpec<R>) -> Result<()> {
    if a != b {
        return Err(MvError::Shape {
            context: context.into(),
            expected: format!("{}x{}", a.nx, a.ny),
            got: format!("{}x{}", b.nx, b.ny),
        });
    }
    Ok(())
}

/// Common norm and inner-product arithmetic over all field types.
pub trait FieldOps<R: Real>: Sized {
    fn domain(&self) -> &DomainSpec<R>;

    /// Flat component slices; all share the midpoint-rule node volume.
    fn flat_comps(&self) -> Vec<&[R]>;

    fn layout_matches(&self, other: &Self) -> bool;

    /// (a, b) = sum over nodes of a*b times the cell volume.
    fn l2_inner(&self, other: &Self) -> Result<R> {
        check_same("l2_inner", self.domain(), other.domain())?;
        if !self.layout_matches(other) {
            return Err(MvError::Shape {
                context: "l2_inner".into(),
                expected: "matching layouts".into(),
                got: "layout mismatch".into(),
            });
        }
        let vol = self.domain().cell_volume();
        let mut acc = R::zero();
        for (a, b) in self.flat_comps().iter().zip(other.flat_comps()) {
            for (x, y) in a.iter().zip(b.iter()) {
                acc += *x * *y;
            }
        }
        Ok(acc * vol)
    }

    fn l2_norm(&self) -> R {
        let vol = self.domain().cell_volume();
        let mut acc = R::zero();
        for a in self.flat_comps() {
            for x in a {
                acc += *x * *x;
            }
        }
        (acc * vol).sqrt()
    }

    /// Max over nodes of the per-node magnitude (Euclidean across components
    /// sharing a node for vector-valued fields).
    fn linf_norm(&self) -> R;
}

impl<R: Real> FieldOps<R> for ScalarField<R> {
    fn domain(&self) -> &DomainSpec<R> {
        &self.domain
    }

    fn flat_comps(&self) -> Vec<&[R]> {
        vec![&self.data]
    }

    fn layout_matches(&self, other: &Self) -> bool {
        self.layout == other.layout
    }

    fn linf_norm(&self) -> R {
        self.data
            .iter()
            .fold(R::zero(), |m, x| m.max(x.abs()))
    }
}

impl<R: Real> FieldOps<R> for VelocityField<R> {
    fn domain(&self) -> &DomainSpec<R> {
        &self.domain
    }

    fn flat_comps(&self) -> Vec<&[R]> {
        vec![&self.u, &self.v]
    }

    fn layout_matches(&self, _other: &Self) -> bool {
        true
    }

    fn linf_norm(&self) -> R {
        let mu = self.u.iter().fold(R::zero(), |m, x| m.max(x.abs()));
        let mv = self.v.iter().fold(R::zero(), |m, x| m.max(x.abs()));
        mu.max(mv)
    }
}

impl<R: Real> FieldOps<R> for Vec3Field<R> {
    fn domain(&self) -> &DomainSpec<R> {
        &self.domain
    }

    fn flat_comps(&self) -> Vec<&[R]> {
        self.comps.iter().map(|c| c.as_slice()).collect()
    }

    fn layout_matches(&self, _other: &Self) -> bool {
        true
    }

    fn linf_norm(&self) -> R {
        let n = self.comps[0].len();
        let mut m = R::zero();
        for k in 0..n {
            let s = self.comps[0][k] * self.comps[0][k]
                + self.comps[1][k] * self.comps[1][k]
                + self.comps[2][k] * self.comps[2][k];
            m = m.max(s);
        }
        m.sqrt()
    }
}

impl<R: Real> FieldOps<R> for MatrixField<R> {
    fn domain(&self) -> &DomainSpec<R> {
        &self.domain
    }

    fn flat_comps(&self) -> Vec<&[R]> {
        let mut out = Vec::with_capacity(4);
        for row in &self.comps {
            for c in row {
                out.push(c.as_slice());
            }
        }
        out
    }

    fn layout_matches(&self, _other: &Self) -> bool {
        true
    }

    fn linf_norm(&self) -> R {
        let n = self.comps[0][0].len();
        let mut m = R::zero();
        for k in 0..n {
            let mut s = R::zero();
            for row in &self.comps {
                for c in row {
                    s += c[k] * c[k];
                }
            }
            m = m.max(s);
        }
        m.sqrt()
    }
}

/// 17 significant digits: lossless round-trip for f64.
pub fn fmt_real<R: Real>(x: R) -> String {
    format!("{:.16e}", x)
}

/// Writes one field in the MVSIM1 text snapshot format.
pub fn write_snapshot<R: Real, W: Write>(
    w: &mut W,
    name: &str,
    layout: Layout,
    domain: &DomainSpec<R>,
    t: R,
    comps: &[&[R]],
) -> Result<()> {
    let (ni, nj) = layout.dims(domain.nx, domain.ny);
    writeln!(
        w,
        "MVSIM1 {} {} {} {} {} {} {} {}",
        name,
        layout.tag(),
        domain.nx,
        domain.ny,
        comps.len(),
        fmt_real(domain.lx),
        fmt_real(domain.ly),
        fmt_real(t)
    )?;
    let mut line = String::new();
    for k in 0..ni * nj {
        line.clear();
        for (c, comp) in comps.iter().enumerate() {
            if c > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{}", fmt_real(comp[k]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Parsed snapshot contents before being wrapped into a typed field.
pub struct RawSnapshot<R: Real> {
    pub name: String,
    pub layout: Layout,
    pub domain: DomainSpec<R>,
    pub t: R,
    pub comps: Vec<Vec<R>>,
}

fn parse_real<R: Real>(s: &str) -> Result<R> {
    let x: f64 = s
        .parse()
        .map_err(|_| MvError::Config(format!("bad number '{s}' in snapshot")))?;
    R::from_f64(x).ok_or_else(|| MvError::Config(format!("unrepresentable number '{s}'")))
}

/// Reads one field from the MVSIM1 text snapshot format.
pub fn read_snapshot<R: Real, Rd: Read>(r: Rd) -> Result<RawSnapshot<R>> {
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .ok_or_else(|| MvError::Config("empty snapshot file".into()))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 9 || parts[0] != "MVSIM1" {
        return Err(MvError::Config(format!("bad snapshot header '{header}'")));
    }
    let name = parts[1].to_string();
    let layout = Layout::from_tag(parts[2])?;
    let nx: usize = parts[3]
        .parse()
        .map_err(|_| MvError::Config("bad nx in snapshot header".into()))?;
    let ny: usize = parts[4]
        .parse()
        .map_err(|_| MvError::Config("bad ny in snapshot header".into()))?;
    let ncomp: usize = parts[5]
        .parse()
        .map_err(|_| MvError::Config("bad ncomp in snapshot header".into()))?;
    let lx = parse_real::<R>(parts[6])?;
    let ly = parse_real::<R>(parts[7])?;
    let t = parse_real::<R>(parts[8])?;
    let domain = DomainSpec::new(lx, ly, nx, ny)?;
    let (ni, nj) = layout.dims(nx, ny);
    let nodes = ni * nj;
    let mut comps = vec![Vec::with_capacity(nodes); ncomp];
    for _ in 0..nodes {
        let line = lines
            .next()
            .ok_or_else(|| MvError::Config("snapshot file truncated".into()))??;
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != ncomp {
            return Err(MvError::Config(format!(
                "snapshot row has {} values, expected {ncomp}",
                vals.len()
            )));
        }
        for (c, v) in vals.iter().enumerate() {
            comps[c].push(parse_real::<R>(v)?);
        }
    }
    Ok(RawSnapshot {
        name,
        layout,
        domain,
        t,
        comps,
    })
}

impl<R: Real> StateSnapshot<R> {
    /// Writes u, p, F, M as four MVSIM1 files under `dir` with the given stem.
    pub fn write_dir(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::fs::File::create(dir.join(format!("{stem}_u.dat")))?;
        write_snapshot(&mut f, "u", Layout::XFace, &self.u.domain, self.t, &[&self.u.u])?;
        let mut f = std::fs::File::create(dir.join(format!("{stem}_v.dat")))?;
        write_snapshot(&mut f, "v", Layout::YFace, &self.u.domain, self.t, &[&self.u.v])?;
        let mut f = std::fs::File::create(dir.join(format!("{stem}_p.dat")))?;
        write_snapshot(&mut f, "p", Layout::CellCenter, &self.p.domain, self.t, &[&self.p.data])?;
        let mut f = std::fs::File::create(dir.join(format!("{stem}_F.dat")))?;
        let fc: Vec<&[R]> = self.f.flat_comps();
        write_snapshot(&mut f, "F", Layout::CellCenter, &self.f.domain, self.t, &fc)?;
        let mut f = std::fs::File::create(dir.join(format!("{stem}_M.dat")))?;
        let mc: Vec<&[R]> = self.m.flat_comps();
        write_snapshot(&mut f, "M", Layout::CellCenter, &self.m.domain, self.t, &mc)?;
        Ok(())
    }
}
