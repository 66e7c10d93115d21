//! Finite-difference reference solver for
//! `−ρ⁻¹ν² ∂t²U + ∂x ρ⁻¹∂xU + ∂z ρ⁻¹∂zU = F`.
//!
//! Second-order leapfrog in time, flux-form centered differences in space
//! with half-node averaged `ρ⁻¹`, homogeneous Dirichlet edges behind a
//! cosine-profile sponge. The sponge is a mass-weighted damping term
//! `ρ⁻¹ν²σ(x) ∂tU`, so every discrete operator stays symmetric and the
//! scheme is exactly reciprocal.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::Medium;
use crate::oneway::PlaneTrace;
use crate::psdo::LateralGrid;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdGrid {
    pub nz: usize,
    pub nx: usize,
    pub z0: f64,
    pub x0: f64,
    pub hz: f64,
    pub hx: f64,
}

impl FdGrid {
    pub fn new(nz: usize, nx: usize, z0: f64, x0: f64, hz: f64, hx: f64) -> Result<Self> {
        if nz < 5 || nx < 5 || !(hz > 0.0) || !(hx > 0.0) {
            return Err(Error::config("finite-difference grid needs at least 5x5 nodes and positive spacings"));
        }
        Ok(Self { nz, nx, z0, x0, hz, hx })
    }

    /// Grid with the same extent and half the spacing.
    pub fn refined(&self) -> Self {
        Self { nz: 2 * self.nz - 1, nx: 2 * self.nx - 1, hz: self.hz / 2.0, hx: self.hx / 2.0, ..*self }
    }

    pub fn z(&self, i: usize) -> f64 {
        self.z0 + i as f64 * self.hz
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.hx
    }

    pub fn nearest(&self, z: f64, x: f64) -> Result<(usize, usize)> {
        let i = ((z - self.z0) / self.hz).round();
        let j = ((x - self.x0) / self.hx).round();
        if i < 0.0 || j < 0.0 || i as usize >= self.nz || j as usize >= self.nx {
            return Err(Error::config(format!("point ({z}, {x}) lies outside the finite-difference grid")));
        }
        Ok((i as usize, j as usize))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Wavelet {
    /// `(1 − 2π²f²s²) e^{−π²f²s²}`, `s = t − delay`, `f` in cycles per unit time.
    Ricker { freq: f64, delay: f64 },
    /// `e^{−s²/(2σ²)}`.
    Gaussian { sigma: f64, delay: f64 },
}

impl Wavelet {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Wavelet::Ricker { freq, delay } => {
                let a = (PI * freq * (t - delay)).powi(2);
                (1.0 - 2.0 * a) * (-a).exp()
            }
            Wavelet::Gaussian { sigma, delay } => (-(t - delay).powi(2) / (2.0 * sigma * sigma)).exp(),
        }
    }

    /// Angular frequency above which the spectrum is below `e^{−8}` of its peak.
    pub fn max_frequency(&self) -> f64 {
        match *self {
            Wavelet::Ricker { freq, .. } => 2.0 * PI * freq * 3.3,
            Wavelet::Gaussian { sigma, .. } => 4.0 / sigma,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceShape {
    /// Single node, scaled by the inverse cell area.
    Point { z: f64, x: f64 },
    /// Smooth spatial bump `e^{−r²/w²}`.
    Gaussian { z: f64, x: f64, width: f64 },
    /// Line source on the row nearest `z` with a Gaussian taper of half-width
    /// `width` and linear delay `(x − x_c)·ν·sin(angle)`; launches a beam at
    /// `angle` (radians) from the vertical.
    Beam { z: f64, x: f64, angle: f64, width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Source {
    pub shape: SourceShape,
    pub wavelet: Wavelet,
    pub amplitude: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sponge {
    /// Layer thickness in cells.
    pub width: usize,
    /// Peak damping rate in units of `ν_min⁻¹ / (width·h)`.
    pub strength: f64,
}

impl Default for Sponge {
    fn default() -> Self {
        Self { width: 30, strength: 12.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FullWaveConfig {
    pub grid: FdGrid,
    pub dt: f64,
    pub nt: usize,
    pub sponge: Sponge,
    pub sources: Vec<Source>,
    /// Depths of recorded planes; linear interpolation between rows.
    pub record_depths: Vec<f64>,
    /// Lateral window `(first node, count)` of recorded planes.
    pub record_window: Option<(usize, usize)>,
    pub record_flux: bool,
    pub receivers: Vec<(f64, f64)>,
    pub snapshot_every: usize,
    pub energy_box: Option<EnergyBox>,
    pub cfl_safety: f64,
}

impl FullWaveConfig {
    pub fn new(grid: FdGrid, dt: f64, nt: usize) -> Self {
        Self {
            grid,
            dt,
            nt,
            sponge: Sponge::default(),
            sources: Vec::new(),
            record_depths: Vec::new(),
            record_window: None,
            record_flux: false,
            receivers: Vec::new(),
            snapshot_every: 0,
            energy_box: None,
            cfl_safety: 0.9,
        }
    }

    /// Largest stable time step for `m` at the configured safety factor.
    pub fn max_dt(&self, m: &Medium) -> f64 {
        let nu_min = m.bounds().nu_min;
        self.cfl_safety * nu_min * self.grid.hz.min(self.grid.hx) / 2f64.sqrt()
    }

    pub fn validate(&self, m: &Medium) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 0.9) {
            return Err(Error::config("CFL safety factor must lie in (0, 0.9]"));
        }
        if !(self.dt > 0.0) || self.nt == 0 {
            return Err(Error::config("full-wave run needs dt > 0 and at least one step"));
        }
        let lim = self.max_dt(m);
        if self.dt > lim {
            return Err(Error::config(format!("CFL violated: dt = {} exceeds {lim}", self.dt)));
        }
        let g = &self.grid;
        let d = m.domain();
        let (zb, xb) = (g.z(g.nz - 1), g.x(g.nx - 1));
        if !(d.contains(g.z0, g.x0) && d.contains(zb, xb)) {
            return Err(Error::config("medium domain does not cover the finite-difference grid"));
        }
        if 2 * self.sponge.width + 3 > g.nz.min(g.nx) {
            return Err(Error::config("sponge layers leave no interior"));
        }
        let w = self.sponge.width as f64;
        let inner_z = (g.z0 + w * g.hz, g.z(g.nz - 1) - w * g.hz);
        let inner_x = (g.x0 + w * g.hx, g.x(g.nx - 1) - w * g.hx);
        for s in &self.sources {
            let (z, x) = match s.shape {
                SourceShape::Point { z, x } | SourceShape::Gaussian { z, x, .. } | SourceShape::Beam { z, x, .. } => {
                    (z, x)
                }
            };
            if z < inner_z.0 || z > inner_z.1 || x < inner_x.0 || x > inner_x.1 {
                return Err(Error::config(format!("source at ({z}, {x}) is inside the sponge or off the grid")));
            }
        }
        for &z in &self.record_depths {
            if z < g.z0 || z > g.z(g.nz - 1) {
                return Err(Error::config(format!("recording depth {z} is off the grid")));
            }
        }
        for &(z, x) in &self.receivers {
            g.nearest(z, x)?;
        }
        let (j0, n) = self.record_window.unwrap_or((0, g.nx));
        if j0 + n > g.nx {
            return Err(Error::config("recording window exceeds the grid"));
        }
        if !self.record_depths.is_empty() {
            LateralGrid::new(n, g.hx, g.x(j0))?;
        }
        Ok(())
    }

    /// Same experiment on a grid with half the spacing and half the time step.
    pub fn refined(&self) -> Self {
        let mut c = self.clone();
        c.grid = self.grid.refined();
        c.dt = self.dt / 2.0;
        c.nt = 2 * self.nt;
        c.sponge.width = 2 * self.sponge.width;
        c.record_window = self.record_window.map(|(j0, n)| (2 * j0, 2 * n));
        c.snapshot_every = 2 * self.snapshot_every;
        c.energy_box = self.energy_box.map(|b| EnergyBox { i0: 2 * b.i0, i1: 2 * b.i1, j0: 2 * b.j0, j1: 2 * b.j1 });
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FullWaveOutput {
    pub traces: Vec<PlaneTrace>,
    /// One time series per receiver, sampled at `n·dt`.
    pub receivers: Vec<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
    /// Monitored energy between `t_n` and `t_{n+1}`, one value per step.
    pub energy: Vec<f64>,
    pub dt: f64,
}

/// Per-node source weights and wavelets, precomputed.
struct Injection {
    nodes: Vec<(usize, f64, f64)>,
    wavelet: Wavelet,
}

fn injections(cfg: &FullWaveConfig, m: &Medium) -> Result<Vec<Injection>> {
    let g = &cfg.grid;
    let mut out = Vec::new();
    for s in &cfg.sources {
        let mut nodes = Vec::new();
        match s.shape {
            SourceShape::Point { z, x } => {
                let (i, j) = g.nearest(z, x)?;
                nodes.push((i * g.nx + j, s.amplitude / (g.hz * g.hx), 0.0));
            }
            SourceShape::Gaussian { z, x, width } => {
                for i in 0..g.nz {
                    for j in 0..g.nx {
                        let r2 = (g.z(i) - z).powi(2) + (g.x(j) - x).powi(2);
                        let w = (-r2 / (width * width)).exp();
                        if w > 1e-16 {
                            nodes.push((i * g.nx + j, s.amplitude * w, 0.0));
                        }
                    }
                }
            }
            SourceShape::Beam { z, x, angle, width } => {
                let (i, _) = g.nearest(z, x)?;
                let p = m.eval(g.z(i), x)?.0 * angle.sin();
                for j in 0..g.nx {
                    let w = (-((g.x(j) - x) / width).powi(2)).exp();
                    if w > 1e-16 {
                        nodes.push((i * g.nx + j, s.amplitude * w / g.hz, (g.x(j) - x) * p));
                    }
                }
            }
        }
        out.push(Injection { nodes, wavelet: s.wavelet });
    }
    Ok(out)
}

/// Sponge damping rate on a grid axis: zero in the interior, cosine ramp to
/// `peak` at the edge.
fn sponge_profile(n: usize, width: usize, peak: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let d = k.min(n - 1 - k) as f64;
            let w = width as f64;
            if d >= w {
                0.0
            } else {
                peak * 0.5 * (1.0 + (PI * d / w).cos())
            }
        })
        .collect()
}

struct Operator {
    nz: usize,
    nx: usize,
    /// `dt²ρν⁻²` at nodes.
    coef: Vec<f64>,
    /// `ρ⁻¹` at `(i+½, j)` and `(i, j+½)`, divided by `h²`.
    bz: Vec<f64>,
    bx: Vec<f64>,
    /// `σ dt / 2` at nodes.
    damp: Vec<f64>,
}

impl Operator {
    fn new(cfg: &FullWaveConfig, m: &Medium) -> Result<Self> {
        let g = &cfg.grid;
        let (nz, nx) = (g.nz, g.nx);
        let mut coef = vec![0.0; nz * nx];
        let mut rinv = vec![0.0; nz * nx];
        for i in 0..nz {
            for j in 0..nx {
                let (nu, rho) = m.eval(g.z(i), g.x(j))?;
                coef[i * nx + j] = cfg.dt * cfg.dt * rho / (nu * nu);
                rinv[i * nx + j] = 1.0 / rho;
            }
        }
        let mut bz = vec![0.0; nz * nx];
        let mut bx = vec![0.0; nz * nx];
        for i in 0..nz {
            for j in 0..nx {
                let k = i * nx + j;
                if i + 1 < nz {
                    bz[k] = 0.5 * (rinv[k] + rinv[k + nx]) / (g.hz * g.hz);
                }
                if j + 1 < nx {
                    bx[k] = 0.5 * (rinv[k] + rinv[k + 1]) / (g.hx * g.hx);
                }
            }
        }
        let nu_min = m.bounds().nu_min;
        let w = cfg.sponge.width;
        let pz = sponge_profile(nz, w, cfg.sponge.strength / (nu_min * w.max(1) as f64 * g.hz));
        let px = sponge_profile(nx, w, cfg.sponge.strength / (nu_min * w.max(1) as f64 * g.hx));
        let mut damp = vec![0.0; nz * nx];
        for i in 0..nz {
            for j in 0..nx {
                damp[i * nx + j] = 0.5 * cfg.dt * pz[i].max(px[j]);
            }
        }
        Ok(Self { nz, nx, coef, bz, bx, damp })
    }

    /// `next ← step(cur, prev)` with the source density `f` already on the grid.
    fn step(&self, cur: &[f64], prev: &[f64], f: &[f64], next: &mut [f64]) {
        let (nz, nx) = (self.nz, self.nx);
        for i in 1..nz - 1 {
            for j in 1..nx - 1 {
                let k = i * nx + j;
                let u = cur[k];
                let lap = self.bz[k] * (cur[k + nx] - u) - self.bz[k - nx] * (u - cur[k - nx])
                    + self.bx[k] * (cur[k + 1] - u)
                    - self.bx[k - 1] * (u - cur[k - 1]);
                let d = self.damp[k];
                next[k] = (2.0 * u - (1.0 - d) * prev[k] + self.coef[k] * (lap - f[k])) / (1.0 + d);
            }
        }
    }
}

/// Run the leapfrog scheme for `cfg.nt` steps.
pub fn run_fullwave(cfg: &FullWaveConfig, m: &Medium) -> Result<FullWaveOutput> {
    cfg.validate(m)?;
    let g = cfg.grid;
    let op = Operator::new(cfg, m)?;
    let inj = injections(cfg, m)?;
    let len = g.nz * g.nx;
    let mut prev = vec![0.0; len];
    let mut cur = vec![0.0; len];
    let mut next = vec![0.0; len];
    let mut f = vec![0.0; len];

    let (j0, nrec) = cfg.record_window.unwrap_or((0, g.nx));
    let rec_rows: Vec<(usize, f64)> = cfg
        .record_depths
        .iter()
        .map(|&z| {
            let s = (z - g.z0) / g.hz;
            let i = (s.floor() as usize).min(g.nz - 2);
            (i, s - i as f64)
        })
        .collect();
    let mut trace_vals: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.nt * nrec); rec_rows.len()];
    let mut flux_vals: Vec<Vec<f64>> = vec![Vec::new(); rec_rows.len()];
    let rho_rows: Vec<Vec<f64>> = cfg
        .record_depths
        .iter()
        .map(|&z| (j0..j0 + nrec).map(|j| m.eval(z, g.x(j)).map(|v| v.1)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let rec_nodes: Vec<usize> = cfg
        .receivers
        .iter()
        .map(|&(z, x)| g.nearest(z, x).map(|(i, j)| i * g.nx + j))
        .collect::<Result<_>>()?;
    let mut receivers: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.nt); rec_nodes.len()];
    let mut snapshots = Vec::new();
    let monitor = cfg.energy_box.map(|b| EnergyMonitor::new(b, &g, m)).transpose()?;
    let mut energy = Vec::new();

    for n in 0..cfg.nt {
        let t = n as f64 * cfg.dt;
        // record the state at t_n
        for (r, &(i, w)) in rec_rows.iter().enumerate() {
            for j in j0..j0 + nrec {
                let a = cur[i * g.nx + j];
                let b = cur[(i + 1) * g.nx + j];
                trace_vals[r].push((1.0 - w) * a + w * b);
                if cfg.record_flux {
                    let below = if i + 2 < g.nz { cur[(i + 2) * g.nx + j] } else { b };
                    let above = if i > 0 { cur[(i - 1) * g.nx + j] } else { a };
                    let da = (b - above) / (2.0 * g.hz);
                    let db = (below - a) / (2.0 * g.hz);
                    flux_vals[r].push(((1.0 - w) * da + w * db) / rho_rows[r][j - j0]);
                }
            }
        }
        for (r, &k) in rec_nodes.iter().enumerate() {
            receivers[r].push(cur[k]);
        }
        if cfg.snapshot_every > 0 && n % cfg.snapshot_every == 0 {
            snapshots.push(Snapshot { t, values: cur.clone() });
        }

        f.iter_mut().for_each(|v| *v = 0.0);
        for s in &inj {
            for &(k, w, delay) in &s.nodes {
                f[k] += w * s.wavelet.eval(t - delay);
            }
        }
        op.step(&cur, &prev, &f, &mut next);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        if let Some(mon) = &monitor {
            energy.push(mon.energy(&g, cfg.dt, &cur, &prev));
        }
        if n % 16 == 15 && !cur.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric(format!("non-finite full-wave field at step {n}, t = {t}")));
        }
    }
    if !cur.iter().all(|v| v.is_finite()) {
        return Err(Error::numeric("non-finite full-wave field at the final step"));
    }

    let lat = if cfg.record_depths.is_empty() { None } else { Some(LateralGrid::new(nrec, g.hx, g.x(j0))?) };
    let mut traces = Vec::new();
    for (r, &z) in cfg.record_depths.iter().enumerate() {
        let mut tr = PlaneTrace::new(z, lat.expect("lateral grid"), 0.0, cfg.dt, std::mem::take(&mut trace_vals[r]))?;
        if cfg.record_flux {
            tr.flux = Some(std::mem::take(&mut flux_vals[r]));
        }
        traces.push(tr);
    }
    Ok(FullWaveOutput { traces, receivers, snapshots, energy, dt: cfg.dt })
}

/// Node box `[i0, i1) × [j0, j1)` over which the discrete energy
/// `½Σ(ρ⁻¹ν² U_t² + ρ⁻¹|∇U|²) h_z h_x` is monitored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBox {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl EnergyBox {
    /// Everything inside the sponge layers.
    pub fn interior(cfg: &FullWaveConfig) -> Self {
        let w = cfg.sponge.width;
        Self { i0: w, i1: cfg.grid.nz - w, j0: w, j1: cfg.grid.nx - w }
    }
}

struct EnergyMonitor {
    b: EnergyBox,
    /// `ρ⁻¹ν²` and `ρ⁻¹` over the box, row-major.
    mass: Vec<f64>,
    stiff: Vec<f64>,
}

impl EnergyMonitor {
    fn new(b: EnergyBox, g: &FdGrid, m: &Medium) -> Result<Self> {
        let b = EnergyBox { i1: b.i1.min(g.nz - 1), j1: b.j1.min(g.nx - 1), ..b };
        let mut mass = Vec::new();
        let mut stiff = Vec::new();
        for i in b.i0..b.i1 {
            for j in b.j0..b.j1 {
                let (nu, rho) = m.eval(g.z(i), g.x(j))?;
                mass.push(nu * nu / rho);
                stiff.push(1.0 / rho);
            }
        }
        Ok(Self { b, mass, stiff })
    }

    fn energy(&self, g: &FdGrid, dt: f64, cur: &[f64], prev: &[f64]) -> f64 {
        let mut e = 0.0;
        let mut q = 0;
        for i in self.b.i0..self.b.i1 {
            for j in self.b.j0..self.b.j1 {
                let k = i * g.nx + j;
                let ut = (cur[k] - prev[k]) / dt;
                let uz = (cur[k + g.nx] - cur[k]) / g.hz;
                let ux = (cur[k + 1] - cur[k]) / g.hx;
                e += 0.5 * (self.mass[q] * ut * ut + self.stiff[q] * (uz * uz + ux * ux));
                q += 1;
            }
        }
        e * g.hz * g.hx
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    /// `‖U_h − U_{h/2}‖` and `‖U_{h/2} − U_{h/4}‖` on the coarse interior nodes.
    pub differences: [f64; 2],
    pub order: f64,
    /// Order outside `2 ± 0.3`.
    pub flagged: bool,
}

/// Self-convergence order from three refinements of `cfg`, comparing the
/// final snapshots on the coarse sponge-free nodes.
pub fn fd_convergence_probe(cfg: &FullWaveConfig, m: &Medium) -> Result<ConvergenceReport> {
    let mut base = cfg.clone();
    base.record_depths.clear();
    base.receivers.clear();
    base.snapshot_every = base.nt;
    let levels = [base.clone(), base.refined(), base.refined().refined()];
    let mut finals = Vec::new();
    for c in &levels {
        let mut c = c.clone();
        c.nt += 1;
        let out = run_fullwave(&c, m)?;
        finals.push(out.snapshots.last().expect("final snapshot").values.clone());
    }
    let g = cfg.grid;
    let w = cfg.sponge.width;
    let sample = |lvl: usize, i: usize, j: usize| {
        let s = 1usize << lvl;
        let nx = (g.nx - 1) * s + 1;
        finals[lvl][i * s * nx + j * s]
    };
    let mut d = [0.0f64; 2];
    for i in w..g.nz - w {
        for j in w..g.nx - w {
            let (a, b, c) = (sample(0, i, j), sample(1, i, j), sample(2, i, j));
            d[0] += (a - b).powi(2);
            d[1] += (b - c).powi(2);
        }
    }
    let d = [d[0].sqrt(), d[1].sqrt()];
    if d[0] == 0.0 && d[1] == 0.0 {
        return Ok(ConvergenceReport { differences: d, order: f64::NAN, flagged: false });
    }
    let order = (d[0] / d[1]).log2();
    Ok(ConvergenceReport { differences: d, order, flagged: !(order - 2.0).abs().le(&0.3) })
}

/// Free-space 2D Green's function of `ν²U_tt − ΔU = δ(x)δ(t)` convolved with
/// a wavelet, `G(r, t) = (1/2π) ∫ w(t − s) / √(s² − ν²r²) ds` over `s > νr`.
///
/// Integrated with the substitution `s = νr cosh u`.
pub fn green_2d(nu: f64, r: f64, t: f64, w: &Wavelet) -> f64 {
    let t0 = nu * r;
    if t <= t0 {
        // the wavelet tail before the first arrival is negligible by construction
        return 0.0;
    }
    let umax = (t / t0).acosh();
    let n = 4000;
    let h = umax / n as f64;
    let mut acc = 0.0;
    for k in 0..=n {
        let u = k as f64 * h;
        let wk = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += wk * w.eval(t - t0 * u.cosh());
    }
    acc * h / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::Domain;

    fn hom(nu: f64, rho: f64) -> Medium {
        Medium::homogeneous(nu, rho, Domain::new(-0.1, 4.1, -0.1, 4.1).unwrap()).unwrap()
    }

    fn base(n: usize, h: f64, nt: usize) -> FullWaveConfig {
        let g = FdGrid::new(n, n, 0.0, 0.0, h, h).unwrap();
        let dt = 0.5 * h;
        FullWaveConfig::new(g, dt, nt)
    }

    fn ricker() -> Wavelet {
        Wavelet::Ricker { freq: 4.0, delay: 0.3 }
    }

    #[test]
    fn cfl_violation_is_a_config_error() {
        let mut c = base(101, 0.02, 10);
        c.dt = 0.02;
        assert!(matches!(c.validate(&hom(1.0, 1.0)), Err(Error::Config(_))));
    }

    #[test]
    fn zero_source_stays_exactly_zero() {
        let mut c = base(81, 0.025, 200);
        c.record_depths = vec![1.0];
        c.record_window = Some((0, 80));
        let out = run_fullwave(&c, &hom(1.0, 1.0)).unwrap();
        assert!(out.traces[0].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn density_rescaling_with_halved_source_leaves_field_unchanged() {
        let mut c = base(81, 0.025, 150);
        c.sources = vec![Source { shape: SourceShape::Point { z: 1.0, x: 1.0 }, wavelet: ricker(), amplitude: 1.0 }];
        c.receivers = vec![(1.3, 1.2)];
        let a = run_fullwave(&c, &hom(1.0, 1.0)).unwrap();
        c.sources[0].amplitude = 0.5;
        let b = run_fullwave(&c, &hom(1.0, 2.0)).unwrap();
        let peak = a.receivers[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.receivers[0].iter().zip(&b.receivers[0]) {
            assert!((x - y).abs() <= 1e-12 * peak);
        }
    }

    #[test]
    fn linearity() {
        let mut c = base(81, 0.025, 200);
        let s1 = Source { shape: SourceShape::Point { z: 1.0, x: 1.0 }, wavelet: ricker(), amplitude: 1.0 };
        let s2 = Source {
            shape: SourceShape::Gaussian { z: 1.2, x: 0.9, width: 0.1 },
            wavelet: Wavelet::Gaussian { sigma: 0.05, delay: 0.2 },
            amplitude: -3.0,
        };
        c.receivers = vec![(1.4, 1.1), (0.9, 1.3)];
        let m = hom(1.0, 1.0);
        c.sources = vec![s1];
        let a = run_fullwave(&c, &m).unwrap();
        c.sources = vec![s2];
        let b = run_fullwave(&c, &m).unwrap();
        c.sources = vec![s1, s2];
        let ab = run_fullwave(&c, &m).unwrap();
        for r in 0..2 {
            let peak = ab.receivers[r].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for n in 0..c.nt {
                let d = ab.receivers[r][n] - a.receivers[r][n] - b.receivers[r][n];
                assert!(d.abs() <= 1e-10 * peak);
            }
        }
    }

    #[test]
    fn point_source_is_reciprocal_in_a_heterogeneous_medium() {
        use crate::medium::{Density, Slowness};
        let m = Medium::analytic(
            Slowness::GaussianLens { v0: 1.0, amplitude: 0.1, z_c: 1.0, x_c: 1.0, width: 0.3 },
            Density::LinearZ { rho0: 1.0, drho_dz: 0.3 },
            Domain::new(-0.1, 4.1, -0.1, 4.1).unwrap(),
        )
        .unwrap();
        let mut c = base(81, 0.025, 400);
        c.dt = 0.4 * c.grid.hz;
        c.sponge.width = 15;
        let (p, q) = ((0.8, 0.7), (1.3, 1.4));
        let run = |src: (f64, f64), rec: (f64, f64)| {
            let mut c = c.clone();
            c.sources = vec![Source { shape: SourceShape::Point { z: src.0, x: src.1 }, wavelet: ricker(), amplitude: 1.0 }];
            c.receivers = vec![rec];
            run_fullwave(&c, &m).unwrap().receivers.remove(0)
        };
        let (a, b) = (run(p, q), run(q, p));
        let peak = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err <= 1e-8 * peak, "{err} vs {peak}");
    }

    #[test]
    fn zero_source_probe_reports_zero_differences() {
        let mut c = base(41, 0.05, 20);
        c.sponge.width = 5;
        let r = fd_convergence_probe(&c, &hom(1.0, 1.0)).unwrap();
        assert_eq!(r.differences, [0.0, 0.0]);
    }

    #[test]
    fn green_function_decays_like_inverse_sqrt_distance() {
        // short pulse: far-field amplitude decays like r^(-1/2)
        let w = Wavelet::Gaussian { sigma: 0.05, delay: 0.3 };
        let g1 = green_2d(1.0, 0.5, 0.85, &w);
        let g2 = green_2d(1.0, 1.0, 1.35, &w);
        assert!(g1 > 0.0 && g2 > 0.0);
        assert!((g1 / g2 - 2f64.sqrt()).abs() < 0.1, "{}", g1 / g2);
    }
}
