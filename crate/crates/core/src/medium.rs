//! Acoustic media: slowness `ν(z, x)` and density `ρ(z, x)`.
//!
//! Analytic presets carry closed-form derivatives. Gridded media are
//! interpolated with a tensor-product natural cubic spline, which is C² in
//! each variable; reported derivatives are the exact derivatives of that
//! interpolant.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridfile::GridFile;
use crate::jet::Jet;

/// Rectangular region on which a medium is defined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub z_min: f64,
    pub z_max: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl Domain {
    pub fn new(z_min: f64, z_max: f64, x_min: f64, x_max: f64) -> Result<Self> {
        if !(z_min < z_max && x_min < x_max) {
            return Err(Error::config(format!(
                "empty domain [{z_min}, {z_max}] x [{x_min}, {x_max}]"
            )));
        }
        Ok(Self { z_min, z_max, x_min, x_max })
    }

    pub fn contains(&self, z: f64, x: f64) -> bool {
        let tz = 1e-12 * (1.0 + self.z_max.abs().max(self.z_min.abs()));
        let tx = 1e-12 * (1.0 + self.x_max.abs().max(self.x_min.abs()));
        z >= self.z_min - tz && z <= self.z_max + tz && x >= self.x_min - tx && x <= self.x_max + tx
    }

    fn check(&self, z: f64, x: f64) -> Result<()> {
        if self.contains(z, x) {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "point (z={z}, x={x}) outside medium domain [{}, {}] x [{}, {}]",
                self.z_min, self.z_max, self.x_min, self.x_max
            )))
        }
    }
}

/// Closed-form slowness models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Slowness {
    Constant { nu: f64 },
    /// `ν = nu0 + dnu_dz·z + dnu_dx·x`
    LinearSlowness { nu0: f64, dnu_dz: f64, dnu_dx: f64 },
    /// `ν = 1 / (v0 + dv_dz·z + dv_dx·x)`
    LinearVelocity { v0: f64, dv_dz: f64, dv_dx: f64 },
    /// Velocity `v0·(1 + amplitude·exp(−r²/(2 width²)))` around `(z_c, x_c)`.
    GaussianLens { v0: f64, amplitude: f64, z_c: f64, x_c: f64, width: f64 },
    /// `ν = nu0·(1 + epsilon·sin(2πx/period))`
    LateralSine { nu0: f64, epsilon: f64, period: f64 },
    /// Piecewise constant in depth. Not differentiable at `z_step`; the
    /// reported gradient there is zero.
    Step { nu_top: f64, nu_bottom: f64, z_step: f64 },
}

/// Closed-form density models (depth dependent only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Density {
    Constant { rho: f64 },
    /// `ρ = rho0 + drho_dz·z`
    LinearZ { rho0: f64, drho_dz: f64 },
    /// `ρ = rho0·exp(rate·z)`
    ExponentialZ { rho0: f64, rate: f64 },
}

/// Value and first derivatives of `ν` and `ρ` at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MediumPoint {
    pub nu: f64,
    pub rho: f64,
    pub dnu_dx: f64,
    pub dnu_dz: f64,
    pub drho_dx: f64,
    pub drho_dz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub nu_min: f64,
    pub nu_max: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticMedium {
    pub slowness: Slowness,
    pub density: Density,
    pub domain: Domain,
}

/// Tensor-product natural cubic spline on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
struct Spline2 {
    nz: usize,
    nx: usize,
    z0: f64,
    x0: f64,
    dz: f64,
    dx: f64,
    f: Vec<f64>,
    fxx: Vec<f64>,
    fzz: Vec<f64>,
    fzzxx: Vec<f64>,
}

/// Natural cubic spline second derivatives for uniformly spaced samples.
fn natural_second_derivs(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior system M[k-1] + 4M[k] + M[k+1] = rhs.
    let k = n - 2;
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 0..k {
        let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) / (h * h);
        if i == 0 {
            c[i] = 1.0 / 4.0;
            d[i] = rhs / 4.0;
        } else {
            let denom = 4.0 - c[i - 1];
            c[i] = 1.0 / denom;
            d[i] = (rhs - d[i - 1]) / denom;
        }
    }
    for i in (0..k).rev() {
        let next = if i + 1 < k { m[i + 2] } else { 0.0 };
        m[i + 1] = d[i] - c[i] * next;
    }
    m
}

/// Cubic-spline basis `[A, B, C, D]` and its derivative of order `k` at
/// local coordinate `t ∈ [0, 1]` within a cell of width `h`.
fn basis(t: f64, h: f64, k: usize) -> [f64; 4] {
    let a = 1.0 - t;
    let b = t;
    match k {
        0 => [a, b, (a * a * a - a) * h * h / 6.0, (b * b * b - b) * h * h / 6.0],
        1 => [-1.0 / h, 1.0 / h, -(3.0 * a * a - 1.0) * h / 6.0, (3.0 * b * b - 1.0) * h / 6.0],
        2 => [0.0, 0.0, a, b],
        3 => [0.0, 0.0, -1.0 / h, 1.0 / h],
        _ => [0.0; 4],
    }
}

impl Spline2 {
    fn new(nz: usize, nx: usize, z0: f64, x0: f64, dz: f64, dx: f64, f: Vec<f64>) -> Self {
        let at = |v: &Vec<f64>, i: usize, j: usize| v[i * nx + j];
        let mut fxx = vec![0.0; nz * nx];
        for i in 0..nz {
            let row: Vec<f64> = (0..nx).map(|j| at(&f, i, j)).collect();
            let m = natural_second_derivs(&row, dx);
            fxx[i * nx..(i + 1) * nx].copy_from_slice(&m);
        }
        let mut fzz = vec![0.0; nz * nx];
        let mut fzzxx = vec![0.0; nz * nx];
        for j in 0..nx {
            let col: Vec<f64> = (0..nz).map(|i| at(&f, i, j)).collect();
            let m = natural_second_derivs(&col, dz);
            let colxx: Vec<f64> = (0..nz).map(|i| at(&fxx, i, j)).collect();
            let mxx = natural_second_derivs(&colxx, dz);
            for i in 0..nz {
                fzz[i * nx + j] = m[i];
                fzzxx[i * nx + j] = mxx[i];
            }
        }
        Self { nz, nx, z0, x0, dz, dx, f, fxx, fzz, fzzxx }
    }

    fn locate(n: usize, origin: f64, h: f64, v: f64) -> (usize, f64) {
        let s = ((v - origin) / h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n.saturating_sub(2));
        (i, s - i as f64)
    }

    /// `∂_z^kz ∂_x^kx s(z, x)`.
    fn eval(&self, z: f64, x: f64, kz: usize, kx: usize) -> f64 {
        let (i, tz) = Self::locate(self.nz, self.z0, self.dz, z);
        let (j, tx) = Self::locate(self.nx, self.x0, self.dx, x);
        let bz = basis(tz, self.dz, kz);
        let bx = basis(tx, self.dx, kx);
        let nx = self.nx;
        let mut s = 0.0;
        for p in 0..2 {
            for q in 0..2 {
                let k = (i + p) * nx + (j + q);
                s += bz[p] * bx[q] * self.f[k]
                    + bz[p] * bx[2 + q] * self.fxx[k]
                    + bz[2 + p] * bx[q] * self.fzz[k]
                    + bz[2 + p] * bx[2 + q] * self.fzzxx[k];
            }
        }
        s
    }
}

/// Medium sampled on a uniform `(z, x)` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GriddedMedium {
    nu: Spline2,
    rho: Spline2,
    domain: Domain,
    bounds: Bounds,
    laterally_homogeneous: bool,
}

impl GriddedMedium {
    /// Build from row-major `(nz, nx)` samples of slowness and density.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        nz: usize,
        nx: usize,
        z0: f64,
        x0: f64,
        dz: f64,
        dx: f64,
        nu: Vec<f64>,
        rho: Vec<f64>,
    ) -> Result<Self> {
        if nz < 2 || nx < 2 {
            return Err(Error::config("gridded medium needs at least 2x2 samples"));
        }
        if !(dz > 0.0 && dx > 0.0) {
            return Err(Error::config("gridded medium spacings must be positive"));
        }
        if nu.len() != nz * nx || rho.len() != nz * nx {
            return Err(Error::config("gridded medium sample count mismatch"));
        }
        if nu.iter().chain(rho.iter()).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("gridded medium samples must be finite and positive"));
        }
        let laterally_homogeneous = (0..nz).all(|i| {
            let row = &nu[i * nx..(i + 1) * nx];
            let rrow = &rho[i * nx..(i + 1) * nx];
            row.iter().all(|v| *v == row[0]) && rrow.iter().all(|v| *v == rrow[0])
        });
        let domain = Domain::new(z0, z0 + (nz - 1) as f64 * dz, x0, x0 + (nx - 1) as f64 * dx)?;
        let nu = Spline2::new(nz, nx, z0, x0, dz, dx, nu);
        let rho = Spline2::new(nz, nx, z0, x0, dz, dx, rho);
        // Bounds of the interpolant: samples plus a 4x oversampled scan
        // (the spline may overshoot between nodes).
        let mut b = Bounds {
            nu_min: f64::INFINITY,
            nu_max: f64::NEG_INFINITY,
            rho_min: f64::INFINITY,
            rho_max: f64::NEG_INFINITY,
        };
        let oz = 4 * (nz - 1) + 1;
        let ox = 4 * (nx - 1) + 1;
        for a in 0..oz {
            let z = z0 + a as f64 * dz / 4.0;
            for c in 0..ox {
                let x = x0 + c as f64 * dx / 4.0;
                let v = nu.eval(z, x, 0, 0);
                let r = rho.eval(z, x, 0, 0);
                b.nu_min = b.nu_min.min(v);
                b.nu_max = b.nu_max.max(v);
                b.rho_min = b.rho_min.min(r);
                b.rho_max = b.rho_max.max(r);
            }
        }
        if !(b.nu_min > 0.0 && b.rho_min > 0.0) {
            return Err(Error::config(
                "spline interpolant of the gridded medium is not strictly positive",
            ));
        }
        Ok(Self { nu, rho, domain, bounds: b, laterally_homogeneous })
    }

    /// Sample an analytic medium at grid nodes.
    pub fn from_medium(
        m: &Medium,
        nz: usize,
        nx: usize,
        z0: f64,
        x0: f64,
        dz: f64,
        dx: f64,
    ) -> Result<Self> {
        let mut nu = Vec::with_capacity(nz * nx);
        let mut rho = Vec::with_capacity(nz * nx);
        for i in 0..nz {
            for j in 0..nx {
                let (v, r) = m.eval(z0 + i as f64 * dz, x0 + j as f64 * dx)?;
                nu.push(v);
                rho.push(r);
            }
        }
        Self::new(nz, nx, z0, x0, dz, dx, nu, rho)
    }

    /// Grid geometry `(nz, nx, z0, x0, dz, dx)`.
    pub fn geometry(&self) -> (usize, usize, f64, f64, f64, f64) {
        let s = &self.nu;
        (s.nz, s.nx, s.z0, s.x0, s.dz, s.dx)
    }

    /// Node samples of `(ν, ρ)`, row-major `(nz, nx)`.
    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.nu.f, &self.rho.f)
    }
}

/// An acoustic medium.
#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Medium {
    Analytic(AnalyticMedium),
    Gridded(GriddedMedium),
}

impl Slowness {
    fn value_and_grad(&self, z: f64, x: f64) -> (f64, f64, f64) {
        match *self {
            Slowness::Constant { nu } => (nu, 0.0, 0.0),
            Slowness::LinearSlowness { nu0, dnu_dz, dnu_dx } => {
                (nu0 + dnu_dz * z + dnu_dx * x, dnu_dz, dnu_dx)
            }
            Slowness::LinearVelocity { v0, dv_dz, dv_dx } => {
                let v = v0 + dv_dz * z + dv_dx * x;
                (1.0 / v, -dv_dz / (v * v), -dv_dx / (v * v))
            }
            Slowness::GaussianLens { v0, amplitude, z_c, x_c, width } => {
                let w2 = width * width;
                let g = (-((z - z_c).powi(2) + (x - x_c).powi(2)) / (2.0 * w2)).exp();
                let v = v0 * (1.0 + amplitude * g);
                let dv_dz = v0 * amplitude * g * (-(z - z_c) / w2);
                let dv_dx = v0 * amplitude * g * (-(x - x_c) / w2);
                (1.0 / v, -dv_dz / (v * v), -dv_dx / (v * v))
            }
            Slowness::LateralSine { nu0, epsilon, period } => {
                let k = 2.0 * std::f64::consts::PI / period;
                (nu0 * (1.0 + epsilon * (k * x).sin()), 0.0, nu0 * epsilon * k * (k * x).cos())
            }
            Slowness::Step { nu_top, nu_bottom, z_step } => {
                (if z < z_step { nu_top } else { nu_bottom }, 0.0, 0.0)
            }
        }
    }

    fn jet_x(&self, z: f64, x: f64, degree: usize) -> Jet {
        let xj = Jet::var_x(x, degree);
        match *self {
            Slowness::Constant { nu } => Jet::constant(nu, degree),
            Slowness::LinearSlowness { nu0, dnu_dz, dnu_dx } => {
                xj.scale(dnu_dx).add_scalar(nu0 + dnu_dz * z)
            }
            Slowness::LinearVelocity { v0, dv_dz, dv_dx } => {
                xj.scale(dv_dx).add_scalar(v0 + dv_dz * z).recip()
            }
            Slowness::GaussianLens { v0, amplitude, z_c, x_c, width } => {
                let dxj = xj.add_scalar(-x_c);
                let r2 = (&dxj * &dxj).add_scalar((z - z_c).powi(2));
                let g = r2.scale(-1.0 / (2.0 * width * width)).exp();
                g.scale(v0 * amplitude).add_scalar(v0).recip()
            }
            Slowness::LateralSine { nu0, epsilon, period } => {
                let k = 2.0 * std::f64::consts::PI / period;
                xj.scale(k).sin().scale(nu0 * epsilon).add_scalar(nu0)
            }
            Slowness::Step { .. } => Jet::constant(self.value_and_grad(z, x).0, degree),
        }
    }

    fn laterally_homogeneous(&self) -> bool {
        match *self {
            Slowness::Constant { .. } | Slowness::Step { .. } => true,
            Slowness::LinearSlowness { dnu_dx, .. } => dnu_dx == 0.0,
            Slowness::LinearVelocity { dv_dx, .. } => dv_dx == 0.0,
            Slowness::GaussianLens { amplitude, .. } => amplitude == 0.0,
            Slowness::LateralSine { epsilon, .. } => epsilon == 0.0,
        }
    }

    fn depth_independent(&self) -> bool {
        match *self {
            Slowness::Constant { .. } | Slowness::LateralSine { .. } => true,
            Slowness::LinearSlowness { dnu_dz, .. } => dnu_dz == 0.0,
            Slowness::LinearVelocity { dv_dz, .. } => dv_dz == 0.0,
            Slowness::GaussianLens { amplitude, .. } => amplitude == 0.0,
            Slowness::Step { nu_top, nu_bottom, .. } => nu_top == nu_bottom,
        }
    }

    /// Extremes of ν over a domain.
    fn range(&self, d: &Domain) -> (f64, f64) {
        let corners = [
            (d.z_min, d.x_min),
            (d.z_min, d.x_max),
            (d.z_max, d.x_min),
            (d.z_max, d.x_max),
        ];
        let corner_range = || {
            let vals: Vec<f64> = corners.iter().map(|&(z, x)| self.value_and_grad(z, x).0).collect();
            (
                vals.iter().cloned().fold(f64::INFINITY, f64::min),
                vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            )
        };
        match *self {
            Slowness::Constant { nu } => (nu, nu),
            Slowness::LinearSlowness { .. } | Slowness::LinearVelocity { .. } => corner_range(),
            Slowness::GaussianLens { v0, amplitude, z_c, x_c, width } => {
                // Velocity ranges between the background and the lens value
                // reached at the point of the domain closest to the centre.
                let zc = z_c.clamp(d.z_min, d.z_max);
                let xc = x_c.clamp(d.x_min, d.x_max);
                let far = corners
                    .iter()
                    .map(|&(z, x)| (z - z_c).powi(2) + (x - x_c).powi(2))
                    .fold(0.0, f64::max);
                let near = (zc - z_c).powi(2) + (xc - x_c).powi(2);
                let g_near = (-near / (2.0 * width * width)).exp();
                let g_far = (-far / (2.0 * width * width)).exp();
                let v1 = v0 * (1.0 + amplitude * g_near);
                let v2 = v0 * (1.0 + amplitude * g_far);
                (1.0 / v1.max(v2), 1.0 / v1.min(v2))
            }
            Slowness::LateralSine { nu0, epsilon, .. } => {
                let a = nu0 * (1.0 - epsilon.abs());
                let b = nu0 * (1.0 + epsilon.abs());
                (a, b)
            }
            Slowness::Step { nu_top, nu_bottom, .. } => (nu_top.min(nu_bottom), nu_top.max(nu_bottom)),
        }
    }
}

impl Density {
    fn value_and_dz(&self, z: f64) -> (f64, f64) {
        match *self {
            Density::Constant { rho } => (rho, 0.0),
            Density::LinearZ { rho0, drho_dz } => (rho0 + drho_dz * z, drho_dz),
            Density::ExponentialZ { rho0, rate } => {
                let r = rho0 * (rate * z).exp();
                (r, rate * r)
            }
        }
    }

    fn depth_independent(&self) -> bool {
        match *self {
            Density::Constant { .. } => true,
            Density::LinearZ { drho_dz, .. } => drho_dz == 0.0,
            Density::ExponentialZ { rate, .. } => rate == 0.0,
        }
    }

    fn range(&self, d: &Domain) -> (f64, f64) {
        let a = self.value_and_dz(d.z_min).0;
        let b = self.value_and_dz(d.z_max).0;
        (a.min(b), a.max(b))
    }
}

impl Medium {
    pub fn analytic(slowness: Slowness, density: Density, domain: Domain) -> Result<Self> {
        let m = AnalyticMedium { slowness, density, domain };
        let b = Medium::Analytic(m.clone()).bounds();
        if !(b.nu_min > 0.0 && b.rho_min > 0.0 && b.nu_max.is_finite() && b.rho_max.is_finite()) {
            return Err(Error::config(format!(
                "medium not strictly positive and bounded on its domain: {b:?}"
            )));
        }
        Ok(Medium::Analytic(m))
    }

    /// `ν ≡ nu`, `ρ ≡ rho` on the given domain.
    pub fn homogeneous(nu: f64, rho: f64, domain: Domain) -> Result<Self> {
        Self::analytic(Slowness::Constant { nu }, Density::Constant { rho }, domain)
    }

    /// Slowness `ν = 1/(v0 + g·z)` with unit density.
    pub fn linear_velocity(v0: f64, g: f64, domain: Domain) -> Result<Self> {
        Self::analytic(
            Slowness::LinearVelocity { v0, dv_dz: g, dv_dx: 0.0 },
            Density::Constant { rho: 1.0 },
            domain,
        )
    }

    pub fn gridded(g: GriddedMedium) -> Self {
        Medium::Gridded(g)
    }

    /// Load a gridded medium stored as a grid file with dims `(field, z, x)`,
    /// field 0 = slowness and field 1 = density.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let g = GridFile::read(path)?;
        if g.is_complex() || g.dims.len() != 3 || g.dims[0].size != 2 {
            return Err(Error::Format(
                "medium grid must be real with dims (field=2, z, x)".into(),
            ));
        }
        let (dz_dim, dx_dim) = (&g.dims[1], &g.dims[2]);
        let n = dz_dim.size * dx_dim.size;
        let nu = g.data[..n].to_vec();
        let rho = g.data[n..2 * n].to_vec();
        Ok(Medium::Gridded(GriddedMedium::new(
            dz_dim.size,
            dx_dim.size,
            dz_dim.origin,
            dx_dim.origin,
            dz_dim.spacing,
            dx_dim.spacing,
            nu,
            rho,
        )?))
    }

    pub fn domain(&self) -> Domain {
        match self {
            Medium::Analytic(a) => a.domain,
            Medium::Gridded(g) => g.domain,
        }
    }

    pub fn bounds(&self) -> Bounds {
        match self {
            Medium::Analytic(a) => {
                let (nu_min, nu_max) = a.slowness.range(&a.domain);
                let (rho_min, rho_max) = a.density.range(&a.domain);
                Bounds { nu_min, nu_max, rho_min, rho_max }
            }
            Medium::Gridded(g) => g.bounds,
        }
    }

    pub fn is_laterally_homogeneous(&self) -> bool {
        match self {
            Medium::Analytic(a) => a.slowness.laterally_homogeneous(),
            Medium::Gridded(g) => g.laterally_homogeneous,
        }
    }

    pub fn is_depth_independent(&self) -> bool {
        match self {
            Medium::Analytic(a) => a.slowness.depth_independent() && a.density.depth_independent(),
            Medium::Gridded(g) => g.nu.nz == 1,
        }
    }

    /// Slowness and density at `(z, x)`.
    pub fn eval(&self, z: f64, x: f64) -> Result<(f64, f64)> {
        self.domain().check(z, x)?;
        Ok(match self {
            Medium::Analytic(a) => {
                (a.slowness.value_and_grad(z, x).0, a.density.value_and_dz(z).0)
            }
            Medium::Gridded(g) => (g.nu.eval(z, x, 0, 0), g.rho.eval(z, x, 0, 0)),
        })
    }

    /// `(∂ν/∂x, ∂ν/∂z, ∂ρ/∂x, ∂ρ/∂z)` at `(z, x)`.
    pub fn gradients(&self, z: f64, x: f64) -> Result<(f64, f64, f64, f64)> {
        let p = self.point(z, x)?;
        Ok((p.dnu_dx, p.dnu_dz, p.drho_dx, p.drho_dz))
    }

    /// Values and first derivatives in one call.
    pub fn point(&self, z: f64, x: f64) -> Result<MediumPoint> {
        self.domain().check(z, x)?;
        Ok(match self {
            Medium::Analytic(a) => {
                let (nu, dnu_dz, dnu_dx) = a.slowness.value_and_grad(z, x);
                let (rho, drho_dz) = a.density.value_and_dz(z);
                MediumPoint { nu, rho, dnu_dx, dnu_dz, drho_dx: 0.0, drho_dz }
            }
            Medium::Gridded(g) => MediumPoint {
                nu: g.nu.eval(z, x, 0, 0),
                rho: g.rho.eval(z, x, 0, 0),
                dnu_dx: g.nu.eval(z, x, 0, 1),
                dnu_dz: g.nu.eval(z, x, 1, 0),
                drho_dx: g.rho.eval(z, x, 0, 1),
                drho_dz: g.rho.eval(z, x, 1, 0),
            },
        })
    }

    /// Taylor jet of `ν(z, ·)` in `x` around `x`.
    pub fn nu_jet_x(&self, z: f64, x: f64, degree: usize) -> Result<Jet> {
        self.domain().check(z, x)?;
        Ok(match self {
            Medium::Analytic(a) => a.slowness.jet_x(z, x, degree),
            Medium::Gridded(g) => {
                let d: Vec<f64> = (0..=degree.min(3)).map(|k| g.nu.eval(z, x, 0, k)).collect();
                Jet::from_x_derivatives(&d, degree)
            }
        })
    }

    /// Taylor jet of `ρ(z, ·)` in `x` around `x`.
    pub fn rho_jet_x(&self, z: f64, x: f64, degree: usize) -> Result<Jet> {
        self.domain().check(z, x)?;
        Ok(match self {
            Medium::Analytic(a) => Jet::constant(a.density.value_and_dz(z).0, degree),
            Medium::Gridded(g) => {
                let d: Vec<f64> = (0..=degree.min(3)).map(|k| g.rho.eval(z, x, 0, k)).collect();
                Jet::from_x_derivatives(&d, degree)
            }
        })
    }
}
