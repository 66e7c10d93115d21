//! Depth marching of `(∂z − iB± + C) u± = 0`, one temporal frequency at a time.
//!
//! Each `τ` slice is independent. The generator `M(z) = iB − C` is built from
//! Kohn–Nirenberg tables of the extended, tapered `B±` symbol and the damping
//! symbol, and is applied in one of three forms: a Fourier multiplier
//! (laterally homogeneous media), a dense matrix, or matrix-free through the
//! symbol table with Krylov solvers for large grids.
//!
//! Temporal transforms use `Û(τ) = Σ_n U(t_n) e^{−iτ t_n}` and
//! `U(t_n) = N_fft⁻¹ Σ_m Û(τ_m) e^{iτ_m t_n}` on the bins `τ_m = 2πm/(N_fft dt)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridfile::{Dim, GridFile};
use crate::krylov;
use crate::medium::{Medium, MediumPoint};
use crate::psdo::{self, hermitize, l2_norm, FreqField, LateralGrid, SymbolTable};
use crate::symbols::{self, ConeConfig, DampingConfig, Normalization, Sign};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepper {
    /// `(I − ½dz M(z+dz)) u' = (I + ½dz M(z)) u`.
    CrankNicolson,
    /// Crank–Nicolson with both sides frozen at `z + dz/2`.
    CrankNicolsonMidpoint,
    /// `u' = exp(dz M(z + dz/2)) u`.
    MatrixExponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Multiplier for laterally homogeneous media, direct dense solves up to
    /// `dense_max` lateral points, the band projection beyond.
    Auto,
    /// LU for Crank–Nicolson, scaling-and-squaring for the exponential.
    Direct,
    /// GMRES for Crank–Nicolson, Arnoldi for the exponential.
    Krylov,
    /// Galerkin projection onto the Fourier modes `|ξ| ≤ band_factor·ν_max|τ|`,
    /// solved directly. Modes outside the band are dropped.
    Band,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OneWayConfig {
    pub sign: Sign,
    pub normalization: Normalization,
    pub cone: ConeConfig,
    pub damping: Option<DampingConfig>,
    pub z0: f64,
    pub z1: f64,
    pub dz: f64,
    pub grid: LateralGrid,
    pub taus: Vec<f64>,
    /// Lower bound on `|τ|` for the band.
    pub tau_min: f64,
    pub stepper: Stepper,
    /// Replace `B` by `(B + B†)/2` before stepping.
    pub strict_unitary: bool,
    /// Clip the negative part of the symmetrized damping matrix.
    pub monotone_damping: bool,
    /// Flip the sign of the damping term (upward marching).
    pub reverse_damping: bool,
    pub solver: SolverKind,
    pub dense_max: usize,
    pub band_factor: f64,
    /// Store every k-th depth; 0 keeps only `z0` and `z1`.
    pub store_every: usize,
    pub krylov_tol: f64,
}

impl OneWayConfig {
    pub fn new(grid: LateralGrid, taus: Vec<f64>, z0: f64, z1: f64, dz: f64, cone: ConeConfig) -> Self {
        Self {
            sign: Sign::Plus,
            normalization: Normalization::Unitary,
            cone,
            damping: None,
            z0,
            z1,
            dz,
            grid,
            taus,
            tau_min: 0.0,
            stepper: Stepper::CrankNicolson,
            strict_unitary: true,
            monotone_damping: false,
            reverse_damping: false,
            solver: SolverKind::Auto,
            dense_max: 128,
            band_factor: 1.0,
            store_every: 0,
            krylov_tol: 1e-13,
        }
    }

    pub fn n_steps(&self) -> usize {
        ((self.z1 - self.z0) / self.dz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.cone.validate()?;
        if let Some(d) = &self.damping {
            d.validate()?;
        }
        if !(self.dz > 0.0) || !(self.z1 > self.z0) {
            return Err(Error::config("one-way config needs dz > 0 and z1 > z0"));
        }
        let n = self.n_steps();
        if n == 0 || ((n as f64) * self.dz - (self.z1 - self.z0)).abs() > 1e-6 * self.dz {
            return Err(Error::config(format!(
                "depth range {} .. {} is not a whole number of steps dz = {}",
                self.z0, self.z1, self.dz
            )));
        }
        if !(self.band_factor > 0.0) {
            return Err(Error::config("band_factor must be positive"));
        }
        if self.taus.is_empty() {
            return Err(Error::config("tau band is empty"));
        }
        for (i, &t) in self.taus.iter().enumerate() {
            if t == 0.0 || !t.is_finite() {
                return Err(Error::config("tau band must not contain 0"));
            }
            if t.abs() < self.tau_min {
                return Err(Error::config(format!("tau = {t} is below the floor tau_min = {}", self.tau_min)));
            }
            if self.taus[..i].contains(&t) {
                return Err(Error::config(format!("tau = {t} appears twice in the band")));
            }
        }
        Ok(())
    }

    fn check_medium(&self, m: &Medium) -> Result<()> {
        let d = m.domain();
        let (xa, xb) = (self.grid.x(0), self.grid.x(self.grid.n - 1));
        if !(d.contains(self.z0, xa) && d.contains(self.z1, xb) && d.contains(self.z0, xb) && d.contains(self.z1, xa)) {
            return Err(Error::config(format!(
                "medium domain does not cover depths {}..{} and lateral nodes {xa}..{xb}",
                self.z0, self.z1
            )));
        }
        self.cone.validate_for(m)
    }
}

/// Recorded field `U(z0, x_j, t_n)`, time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneTrace {
    pub z0: f64,
    pub grid: LateralGrid,
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    /// `ρ⁻¹ ∂U/∂z` at the same samples, if recorded.
    pub flux: Option<Vec<f64>>,
}

impl PlaneTrace {
    pub fn new(z0: f64, grid: LateralGrid, t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !values.len().is_multiple_of(grid.n) {
            return Err(Error::config("trace length must be a positive multiple of the lateral size"));
        }
        if !(dt > 0.0) {
            return Err(Error::config("trace needs dt > 0"));
        }
        Ok(Self { z0, grid, t0, dt, values, flux: None })
    }

    pub fn nt(&self) -> usize {
        self.values.len() / self.grid.n
    }

    pub fn at(&self, it: usize, j: usize) -> f64 {
        self.values[it * self.grid.n + j]
    }

    /// Append zero samples up to `nt` to push periodic wrap-around of the
    /// temporal transform past the window of interest.
    pub fn padded(&self, nt: usize) -> Self {
        let mut p = self.clone();
        if nt > self.nt() {
            p.values.resize(nt * self.grid.n, 0.0);
            if let Some(f) = &mut p.flux {
                f.resize(nt * self.grid.n, 0.0);
            }
        }
        p
    }

    /// The first `nt` samples.
    pub fn truncated(&self, nt: usize) -> Self {
        let mut p = self.clone();
        let len = nt.min(self.nt()) * self.grid.n;
        p.values.truncate(len);
        if let Some(f) = &mut p.flux {
            f.truncate(len);
        }
        p
    }

    /// Lateral sub-window of `n` nodes starting at node `j0`.
    pub fn window(&self, j0: usize, n: usize) -> Result<Self> {
        if j0 + n > self.grid.n {
            return Err(Error::config("lateral window exceeds the trace"));
        }
        let grid = LateralGrid::new(n, self.grid.dx, self.grid.x(j0))?;
        let pick = |v: &[f64]| -> Vec<f64> {
            v.chunks_exact(self.grid.n).flat_map(|row| row[j0..j0 + n].iter().copied()).collect()
        };
        Ok(Self { z0: self.z0, grid, t0: self.t0, dt: self.dt, values: pick(&self.values), flux: self.flux.as_deref().map(pick) })
    }

    /// Every `stride`-th lateral node, starting at node 0.
    pub fn decimated(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::config("decimation stride must be positive"));
        }
        let n = self.grid.n.div_ceil(stride);
        let grid = LateralGrid::new(n, self.grid.dx * stride as f64, self.grid.x0)?;
        let pick = |v: &[f64]| -> Vec<f64> {
            v.chunks_exact(self.grid.n).flat_map(|row| row.iter().step_by(stride).copied()).collect()
        };
        Ok(Self { z0: self.z0, grid, t0: self.t0, dt: self.dt, values: pick(&self.values), flux: self.flux.as_deref().map(pick) })
    }

    /// Zero-extend laterally to `n` nodes, with `left` new nodes before the
    /// first existing one. Widens the periodic lateral window.
    pub fn embedded(&self, n: usize, left: usize) -> Result<Self> {
        if left + self.grid.n > n {
            return Err(Error::config("embedding window is smaller than the trace"));
        }
        let grid = LateralGrid::new(n, self.grid.dx, self.grid.x0 - left as f64 * self.grid.dx)?;
        let put = |v: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; v.len() / self.grid.n * n];
            for (src, dst) in v.chunks_exact(self.grid.n).zip(out.chunks_exact_mut(n)) {
                dst[left..left + self.grid.n].copy_from_slice(src);
            }
            out
        };
        Ok(Self { z0: self.z0, grid, t0: self.t0, dt: self.dt, values: put(&self.values), flux: self.flux.as_deref().map(put) })
    }

    /// `Û(τ, x_j) = Σ_n U(t_n, x_j) e^{−iτ t_n}`.
    pub fn spectrum(&self, tau: f64) -> Vec<C64> {
        let n = self.grid.n;
        let mut out = vec![C64::new(0.0, 0.0); n];
        let step = C64::from_polar(1.0, -tau * self.dt);
        let mut ph = C64::from_polar(1.0, -tau * self.t0);
        for it in 0..self.nt() {
            let row = &self.values[it * n..(it + 1) * n];
            for (o, &v) in out.iter_mut().zip(row) {
                *o += ph * v;
            }
            ph *= step;
            if it % 64 == 63 {
                ph /= ph.norm();
            }
        }
        out
    }

    pub fn to_grid_file(&self) -> Result<GridFile> {
        Ok(GridFile::real(
            vec![
                Dim::new("t", self.nt(), self.t0, self.dt, "time"),
                Dim::new("x", self.grid.n, self.grid.x0, self.grid.dx, "lateral"),
            ],
            self.values.clone(),
        )?
        .with_attr("z0", self.z0))
    }

    pub fn from_grid_file(g: &GridFile) -> Result<Self> {
        if g.dims.len() != 2 || g.dims[0].name != "t" || g.dims[1].name != "x" || g.is_complex() {
            return Err(Error::Format("a plane trace is a real (t, x) grid".into()));
        }
        let z0 = g
            .attrs
            .get("z0")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format("plane trace needs attr.z0".into()))?;
        let grid = LateralGrid::new(g.dims[1].size, g.dims[1].spacing, g.dims[1].origin)?;
        Self::new(z0, grid, g.dims[0].origin, g.dims[0].spacing, g.data.clone())
    }
}

/// Positive DFT bins `τ_m = 2πm/(n_fft dt)` with `tau_lo ≤ τ_m ≤ tau_hi`.
pub fn dft_taus(n_fft: usize, dt: f64, tau_lo: f64, tau_hi: f64) -> Vec<f64> {
    let d = 2.0 * PI / (n_fft as f64 * dt);
    (1..n_fft / 2)
        .map(|m| m as f64 * d)
        .filter(|&t| t >= tau_lo && t <= tau_hi)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeAxis {
    pub t0: f64,
    pub dt: f64,
    pub n_fft: usize,
}

/// `u(z_i, x_j, τ_k)` at stored depths.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldCube {
    pub grid: LateralGrid,
    pub depths: Vec<f64>,
    pub taus: Vec<f64>,
    values: Vec<C64>,
    pub time: Option<TimeAxis>,
    pub warnings: Vec<String>,
}

impl FieldCube {
    pub fn zeros(grid: LateralGrid, depths: Vec<f64>, taus: Vec<f64>) -> Self {
        let len = depths.len() * taus.len() * grid.n;
        Self { grid, depths, taus, values: vec![C64::new(0.0, 0.0); len], time: None, warnings: Vec::new() }
    }

    fn offset(&self, iz: usize, it: usize) -> usize {
        (iz * self.taus.len() + it) * self.grid.n
    }

    pub fn slice(&self, iz: usize, it: usize) -> &[C64] {
        let o = self.offset(iz, it);
        &self.values[o..o + self.grid.n]
    }

    pub fn slice_mut(&mut self, iz: usize, it: usize) -> &mut [C64] {
        let o = self.offset(iz, it);
        let n = self.grid.n;
        &mut self.values[o..o + n]
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn depth_index(&self, z: f64) -> Option<usize> {
        self.depths.iter().position(|&d| (d - z).abs() <= 1e-9 * (1.0 + z.abs()))
    }

    /// Real time-domain samples `U(t_n, x_j)` at depth index `iz`, time-major.
    ///
    /// A band of positive frequencies stands for its Hermitian mirror image.
    pub fn time_domain(&self, iz: usize) -> Result<Vec<f64>> {
        let ax = self.time.ok_or_else(|| Error::config("cube has no time axis"))?;
        let n = self.grid.n;
        let mirror = self.taus.iter().all(|&t| t > 0.0);
        let scale = if mirror { 2.0 } else { 1.0 } / ax.n_fft as f64;
        let mut out = vec![0.0; ax.n_fft * n];
        for (it, &tau) in self.taus.iter().enumerate() {
            let s = self.slice(iz, it);
            let step = C64::from_polar(1.0, tau * ax.dt);
            let mut ph = C64::from_polar(1.0, tau * ax.t0);
            for k in 0..ax.n_fft {
                let row = &mut out[k * n..(k + 1) * n];
                for (o, v) in row.iter_mut().zip(s) {
                    *o += scale * (v * ph).re;
                }
                ph *= step;
                if k % 64 == 63 {
                    ph /= ph.norm();
                }
            }
        }
        Ok(out)
    }

    pub fn to_grid_file(&self) -> Result<GridFile> {
        let dz = if self.depths.len() > 1 { self.depths[1] - self.depths[0] } else { 0.0 };
        let dtau = if self.taus.len() > 1 { self.taus[1] - self.taus[0] } else { 0.0 };
        let mut g = GridFile::complex(
            vec![
                Dim::new("z", self.depths.len(), self.depths[0], dz, "depth"),
                Dim::new("tau", self.taus.len(), self.taus[0], dtau, "angular-frequency"),
                Dim::new("x", self.grid.n, self.grid.x0, self.grid.dx, "lateral"),
            ],
            &self.values,
        )?;
        g = g.with_attr("depths", join(&self.depths)).with_attr("taus", join(&self.taus));
        if let Some(t) = self.time {
            g = g.with_attr("t0", t.t0).with_attr("dt", t.dt).with_attr("n_fft", t.n_fft);
        }
        Ok(g)
    }

    pub fn from_grid_file(g: &GridFile) -> Result<Self> {
        let names: Vec<&str> = g.dims.iter().map(|d| d.name.as_str()).collect();
        if names != ["z", "tau", "x"] || !g.is_complex() {
            return Err(Error::Format("a field cube is a complex (z, tau, x) grid".into()));
        }
        let list = |key: &str, n: usize, d: &Dim| -> Result<Vec<f64>> {
            match g.attrs.get(key) {
                Some(s) => s
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad {key} list"))))
                    .collect(),
                None => Ok((0..n).map(|i| d.origin + i as f64 * d.spacing).collect()),
            }
        };
        let depths = list("depths", g.dims[0].size, &g.dims[0])?;
        let taus = list("taus", g.dims[1].size, &g.dims[1])?;
        let grid = LateralGrid::new(g.dims[2].size, g.dims[2].spacing, g.dims[2].origin)?;
        let time = match (g.attrs.get("t0"), g.attrs.get("dt"), g.attrs.get("n_fft")) {
            (Some(a), Some(b), Some(c)) => Some(TimeAxis {
                t0: a.parse().map_err(|_| Error::Format("bad t0".into()))?,
                dt: b.parse().map_err(|_| Error::Format("bad dt".into()))?,
                n_fft: c.parse().map_err(|_| Error::Format("bad n_fft".into()))?,
            }),
            _ => None,
        };
        Ok(Self { grid, depths, taus, values: g.complex_values(), time, warnings: Vec::new() })
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",")
}

/// Depth generator `M(z) = iB − C`: a Fourier multiplier or an assembled matrix.
enum Generator {
    Multiplier(Vec<C64>),
    Matrix(DMatrix<C64>),
}

/// How a slice applies and inverts its generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Multiplier,
    Direct,
    Krylov,
    Band,
}

impl Generator {
    fn apply(&self, v: &[C64]) -> Vec<C64> {
        match self {
            Generator::Multiplier(s) => psdo::multiply(s, v),
            Generator::Matrix(m) => matvec(m, v),
        }
    }
}

/// Column-axpy product; faster than the generic one for complex entries.
fn matvec(m: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    let n = m.nrows();
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (col, vj) in m.as_slice().chunks_exact(n).zip(v) {
        for (o, c) in out.iter_mut().zip(col) {
            *o += c * vj;
        }
    }
    out
}

/// Marching state for one frequency. In band mode the state vector holds the
/// unitary Fourier coefficients of the band modes, otherwise nodal values.
struct Slice<'a> {
    cfg: &'a OneWayConfig,
    m: &'a Medium,
    tau: f64,
    mode: Mode,
    band: Vec<usize>,
}

fn choose_mode(cfg: &OneWayConfig, m: &Medium) -> Mode {
    if m.is_laterally_homogeneous() {
        return Mode::Multiplier;
    }
    match cfg.solver {
        SolverKind::Direct => Mode::Direct,
        SolverKind::Krylov => Mode::Krylov,
        SolverKind::Band => Mode::Band,
        SolverKind::Auto if cfg.grid.n <= cfg.dense_max => Mode::Direct,
        SolverKind::Auto => Mode::Band,
    }
}

fn medium_points(m: &Medium, z: f64, grid: &LateralGrid) -> Result<Vec<MediumPoint>> {
    (0..grid.n).map(|j| m.point(z, grid.x(j))).collect()
}

impl<'a> Slice<'a> {
    fn new(cfg: &'a OneWayConfig, m: &'a Medium, tau: f64) -> Self {
        let mode = choose_mode(cfg, m);
        let band = if mode == Mode::Band {
            let k = cfg.band_factor * m.bounds().nu_max * tau.abs();
            (0..cfg.grid.n).filter(|&i| cfg.grid.xi(i).abs() <= k).collect()
        } else {
            Vec::new()
        };
        Self { cfg, m, tau, mode, band }
    }

    fn to_state(&self, u: &[C64]) -> Vec<C64> {
        if self.mode != Mode::Band {
            return u.to_vec();
        }
        let mut v = u.to_vec();
        psdo::fft_forward(&mut v);
        let s = 1.0 / (u.len() as f64).sqrt();
        self.band.iter().map(|&k| v[k] * s).collect()
    }

    fn unpack(&self, st: &[C64]) -> Vec<C64> {
        if self.mode != Mode::Band {
            return st.to_vec();
        }
        let n = self.cfg.grid.n;
        let mut v = vec![C64::new(0.0, 0.0); n];
        let s = 1.0 / (n as f64).sqrt();
        for (&k, c) in self.band.iter().zip(st) {
            v[k] = c * s;
        }
        psdo::fft_inverse(&mut v);
        v
    }

    /// `(F M F*)` restricted to the band, for a Kohn–Nirenberg symbol table.
    fn band_matrix(&self, sigma: impl Fn(usize, f64) -> Result<C64>) -> Result<DMatrix<C64>> {
        let g = &self.cfg.grid;
        let n = g.n;
        let nb = self.band.len();
        let mut out = DMatrix::<C64>::zeros(nb, nb);
        let mut f = vec![C64::new(0.0, 0.0); n];
        for (cl, &l) in self.band.iter().enumerate() {
            let xi_l = g.xi(l);
            for (j, fj) in f.iter_mut().enumerate() {
                *fj = sigma(j, xi_l)? * C64::from_polar(1.0, 2.0 * PI * ((l * j) % n) as f64 / n as f64);
            }
            psdo::fft_forward(&mut f);
            for (rk, &k) in self.band.iter().enumerate() {
                out[(rk, cl)] = f[k] / n as f64;
            }
        }
        Ok(out)
    }

    fn c_sign(&self) -> f64 {
        if self.cfg.reverse_damping {
            -1.0
        } else {
            1.0
        }
    }

    fn b_value(&self, mp: &MediumPoint, xi: f64) -> Result<C64> {
        let c = self.cfg;
        symbols::big_b_at(mp, xi, self.tau, c.sign, c.normalization, Some(&c.cone))
    }

    fn c_value(&self, mp: &MediumPoint, xi: f64) -> f64 {
        match &self.cfg.damping {
            Some(d) => symbols::damping_at(mp.nu, xi, self.tau, d),
            None => 0.0,
        }
    }

    fn generator(&self, z: f64) -> Result<Generator> {
        let g = self.cfg.grid;
        let herm = self.cfg.strict_unitary;
        if self.mode == Mode::Multiplier {
            let mp = self.m.point(z, g.x(0))?;
            let vals = g
                .xis()
                .iter()
                .map(|&xi| {
                    let mut b = self.b_value(&mp, xi)?;
                    if herm {
                        b = C64::from(b.re);
                    }
                    Ok(C64::i() * b - self.c_sign() * self.c_value(&mp, xi))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(Generator::Multiplier(vals));
        }
        let mps = medium_points(self.m, z, &g)?;
        let band = self.mode == Mode::Band;
        let b_fn = |j: usize, xi: f64| self.b_value(&mps[j], xi);
        let c_fn = |j: usize, xi: f64| Ok(C64::from(self.c_value(&mps[j], xi)));
        let mut bm = if band {
            self.band_matrix(b_fn)?
        } else {
            SymbolTable::from_fn(g, |j, _, xi| b_fn(j, xi))?.to_matrix()
        };
        if herm {
            bm = hermitize(&bm);
        }
        let mut mat = bm * C64::i();
        if self.cfg.damping.is_some() {
            let c = if band {
                self.band_matrix(c_fn)?
            } else {
                SymbolTable::from_fn(g, |j, _, xi| c_fn(j, xi))?.to_matrix()
            };
            let mut cm = hermitize(&c);
            if self.cfg.monotone_damping {
                cm = clip_negative(cm);
            }
            mat -= cm * C64::from(self.c_sign());
        }
        Ok(Generator::Matrix(mat))
    }

    fn cn(&self, u: &[C64], g0: &Generator, g1: &Generator, h: f64) -> Result<Vec<C64>> {
        let half = C64::from(0.5 * h);
        if let (Generator::Multiplier(a), Generator::Multiplier(b)) = (g0, g1) {
            let f: Vec<C64> =
                a.iter().zip(b).map(|(a, b)| (C64::from(1.0) + half * a) / (C64::from(1.0) - half * b)).collect();
            return Ok(psdo::multiply(&f, u));
        }
        let rhs: Vec<C64> = u.iter().zip(g0.apply(u)).map(|(x, y)| x + half * y).collect();
        match (self.mode, g1) {
            (Mode::Direct | Mode::Band, Generator::Matrix(m1)) => {
                let n = u.len();
                let a = DMatrix::<C64>::identity(n, n) - m1 * half;
                a.lu()
                    .solve(&DVector::from_vec(rhs))
                    .map(|v| v.as_slice().to_vec())
                    .ok_or_else(|| Error::numeric("singular Crank-Nicolson system"))
            }
            _ => {
                let (x, _) = krylov::gmres(
                    |v| v.iter().zip(g1.apply(v)).map(|(x, y)| x - half * y).collect(),
                    &rhs,
                    Some(u),
                    self.cfg.krylov_tol,
                    40,
                    4000,
                )?;
                Ok(x)
            }
        }
    }

    fn expm(&self, u: &[C64], g: &Generator, h: f64) -> Result<Vec<C64>> {
        match g {
            Generator::Multiplier(a) => {
                let f: Vec<C64> = a.iter().map(|a| (a * h).exp()).collect();
                Ok(psdo::multiply(&f, u))
            }
            Generator::Matrix(m) if self.mode != Mode::Krylov => {
                Ok(((m * C64::from(h)).exp() * DVector::from_column_slice(u)).as_slice().to_vec())
            }
            Generator::Matrix(_) => krylov::expm_krylov(|v| g.apply(v), u, h, self.cfg.krylov_tol, 40),
        }
    }
}

fn clip_negative(m: DMatrix<C64>) -> DMatrix<C64> {
    let e = SymmetricEigen::new(m);
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| C64::from(l.max(0.0))));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

/// Zero lateral wavenumbers beyond `ν_min(z)|τ| sin θ2`; returns the fraction
/// of energy that was at or beyond `ν_max(z)|τ|`.
fn project_band(v: &mut [C64], grid: &LateralGrid, m: &Medium, z: f64, tau: f64, cone: &ConeConfig) -> Result<f64> {
    let mut nu_min = f64::INFINITY;
    let mut nu_max = 0.0f64;
    for j in 0..grid.n {
        let nu = m.eval(z, grid.x(j))?.0;
        nu_min = nu_min.min(nu);
        nu_max = nu_max.max(nu);
    }
    psdo::fft_forward(v);
    let total: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    let mut evanescent = 0.0;
    let cut = nu_min * tau.abs() * cone.theta2.sin();
    for (k, c) in v.iter_mut().enumerate() {
        let xi = grid.xi(k).abs();
        if xi >= nu_max * tau.abs() {
            evanescent += c.norm_sqr();
        }
        if xi > cut {
            *c = C64::new(0.0, 0.0);
        }
    }
    psdo::fft_inverse(v);
    let inv = 1.0 / grid.n as f64;
    v.iter_mut().for_each(|c| *c *= inv);
    Ok(if total > 0.0 { evanescent / total } else { 0.0 })
}

/// Table of `ρ^(−½)|b_ext|^(½)` (`inverse = true`) or its reciprocal at depth `z`.
fn q_table(cfg: &OneWayConfig, m: &Medium, z: f64, tau: f64, inverse: bool) -> Result<SymbolTable> {
    let mps = medium_points(m, z, &cfg.grid)?;
    let p = if inverse { 1.0 } else { -1.0 };
    SymbolTable::from_fn(cfg.grid, |j, _, xi| {
        let mp = &mps[j];
        let b = symbols::b_ext_at(mp.nu, xi, tau, &cfg.cone).abs();
        Ok(C64::from((mp.rho.powf(-0.5) * b.sqrt()).powf(p)))
    })
}

fn apply_q(cfg: &OneWayConfig, m: &Medium, z: f64, tau: f64, inverse: bool, v: &[C64]) -> Result<Vec<C64>> {
    let t = q_table(cfg, m, z, tau, inverse)?;
    if m.is_laterally_homogeneous() {
        Ok(psdo::multiply(t.row(0), v))
    } else {
        Ok(t.apply(v))
    }
}

fn check_trace(tr: &PlaneTrace, cfg: &OneWayConfig) -> Result<()> {
    let g = &cfg.grid;
    let same = tr.grid.n == g.n
        && (tr.grid.dx - g.dx).abs() <= 1e-12 * g.dx
        && (tr.grid.x0 - g.x0).abs() <= 1e-9 * (1.0 + g.x0.abs());
    if !same {
        return Err(Error::config("trace lateral grid differs from the one-way grid"));
    }
    if (tr.z0 - cfg.z0).abs() > 1e-9 * (1.0 + cfg.z0.abs()) {
        return Err(Error::config(format!("trace recorded at z = {}, config starts at {}", tr.z0, cfg.z0)));
    }
    Ok(())
}

/// Initial `u₊(z0, ·, τ)` for every `τ` of the band: temporal transform of
/// the trace, band projection, and `Q₊⁻¹` for the unitary normalization.
pub fn init_from_trace(tr: &PlaneTrace, cfg: &OneWayConfig, m: &Medium) -> Result<(Vec<FreqField>, Vec<String>)> {
    cfg.validate()?;
    cfg.check_medium(m)?;
    check_trace(tr, cfg)?;
    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(cfg.taus.len());
    for &tau in &cfg.taus {
        let mut v = tr.spectrum(tau);
        let frac = project_band(&mut v, &cfg.grid, m, cfg.z0, tau, &cfg.cone)?;
        if frac > 1e-2 {
            warnings.push(format!("tau = {tau}: {:.1}% of the trace energy is evanescent", 100.0 * frac));
        }
        if cfg.normalization == Normalization::Unitary {
            v = apply_q(cfg, m, cfg.z0, tau, true, &v)?;
        }
        out.push(FreqField::new(cfg.grid, tau, cfg.z0, v)?);
    }
    Ok((out, warnings))
}

fn check_finite(v: &[C64], z: f64, tau: f64) -> Result<()> {
    if v.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(format!("non-finite field at z = {z}, tau = {tau}")))
    }
}

impl Slice<'_> {
    /// Advance a state from `z` to `z + h`. For the trapezoidal stepper
    /// `g_prev` carries the generator at `z` in and the one at `z + h` out.
    fn advance(&self, st: &[C64], z: f64, h: f64, g_prev: &mut Option<Generator>) -> Result<Vec<C64>> {
        match self.cfg.stepper {
            Stepper::CrankNicolson => {
                let g0 = match g_prev.take() {
                    Some(g) => g,
                    None => self.generator(z)?,
                };
                let g1 = self.generator(z + h)?;
                let next = self.cn(st, &g0, &g1, h)?;
                *g_prev = Some(g1);
                Ok(next)
            }
            Stepper::CrankNicolsonMidpoint => {
                let g = self.generator(z + 0.5 * h)?;
                self.cn(st, &g, &g, h)
            }
            Stepper::MatrixExponential => self.expm(st, &self.generator(z + 0.5 * h)?, h),
        }
    }
}

/// One depth step from `u.z` to `u.z + dz`.
pub fn step(u: &FreqField, cfg: &OneWayConfig, m: &Medium) -> Result<FreqField> {
    cfg.validate()?;
    let s = Slice::new(cfg, m, u.tau);
    let st = s.advance(&s.to_state(&u.values), u.z, cfg.dz, &mut None)?;
    let values = s.unpack(&st);
    check_finite(&values, u.z + cfg.dz, u.tau)?;
    FreqField::new(u.grid, u.tau, u.z + cfg.dz, values)
}

/// March one slice from `cfg.z0` to `cfg.z1`. `observe(k, z, u)` is called at
/// the start (`k = 0`, after band projection) and after every step.
pub fn march(
    u0: &FreqField,
    cfg: &OneWayConfig,
    m: &Medium,
    mut observe: impl FnMut(usize, f64, &[C64]) -> Result<()>,
) -> Result<FreqField> {
    cfg.validate()?;
    cfg.check_medium(m)?;
    if u0.values.len() != cfg.grid.n {
        return Err(Error::config("initial field does not match the lateral grid"));
    }
    let s = Slice::new(cfg, m, u0.tau);
    let n = cfg.n_steps();
    let h = (cfg.z1 - cfg.z0) / n as f64;
    let mut u = u0.values.clone();
    project_band(&mut u, &cfg.grid, m, cfg.z0, u0.tau, &cfg.cone)?;
    let mut st = s.to_state(&u);
    if s.mode == Mode::Band {
        u = s.unpack(&st);
    }
    observe(0, cfg.z0, &u)?;
    let mut g_prev = None;
    for k in 0..n {
        let z = cfg.z0 + k as f64 * h;
        st = s.advance(&st, z, h, &mut g_prev)?;
        u = s.unpack(&st);
        check_finite(&u, z + h, u0.tau)?;
        observe(k + 1, z + h, &u)?;
    }
    FreqField::new(cfg.grid, u0.tau, cfg.z1, u)
}

fn stored_steps(cfg: &OneWayConfig) -> Vec<usize> {
    let n = cfg.n_steps();
    let mut ks: Vec<usize> = if cfg.store_every == 0 {
        vec![0, n]
    } else {
        (0..=n).step_by(cfg.store_every).collect()
    };
    if *ks.last().expect("non-empty") != n {
        ks.push(n);
    }
    ks
}

/// March a set of initial fields (one per `τ` of the band).
pub fn propagate_fields(init: &[FreqField], cfg: &OneWayConfig, m: &Medium) -> Result<FieldCube> {
    cfg.validate()?;
    let ks = stored_steps(cfg);
    let h = (cfg.z1 - cfg.z0) / cfg.n_steps() as f64;
    let depths: Vec<f64> = ks.iter().map(|&k| cfg.z0 + k as f64 * h).collect();
    let mut cube = FieldCube::zeros(cfg.grid, depths, cfg.taus.clone());
    for (it, &tau) in cfg.taus.iter().enumerate() {
        let u0 = init
            .iter()
            .find(|f| f.tau == tau)
            .ok_or_else(|| Error::config(format!("no initial field for tau = {tau}")))?;
        march(u0, cfg, m, |k, _, u| {
            if let Ok(iz) = ks.binary_search(&k) {
                cube.slice_mut(iz, it).copy_from_slice(u);
            }
            Ok(())
        })?;
    }
    Ok(cube)
}

/// Initialize from a recorded trace and march every frequency of the band.
pub fn propagate(tr: &PlaneTrace, cfg: &OneWayConfig, m: &Medium) -> Result<FieldCube> {
    let (init, warnings) = init_from_trace(tr, cfg, m)?;
    let mut cube = propagate_fields(&init, cfg, m)?;
    cube.warnings = warnings;
    cube.time = Some(TimeAxis { t0: tr.t0, dt: tr.dt, n_fft: tr.nt() });
    Ok(cube)
}

/// Physical field `Q₊u₊` at every stored depth.
pub fn reconstruct_u(cube: &FieldCube, cfg: &OneWayConfig, m: &Medium) -> Result<FieldCube> {
    if cfg.normalization == Normalization::Sum {
        return Ok(cube.clone());
    }
    let mut out = cube.clone();
    for (iz, &z) in cube.depths.iter().enumerate() {
        for (it, &tau) in cube.taus.iter().enumerate() {
            let v = apply_q(cfg, m, z, tau, false, cube.slice(iz, it))?;
            out.slice_mut(iz, it).copy_from_slice(&v);
        }
    }
    Ok(out)
}

/// Discrete `L2` norm of a lateral slice, `(Σ|u_j|² dx)^½`.
pub fn slice_norm(u: &[C64], grid: &LateralGrid) -> f64 {
    l2_norm(u) * grid.dx.sqrt()
}
