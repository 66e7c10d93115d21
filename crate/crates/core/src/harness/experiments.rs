//! Verification experiments. Each one measures a set of quantities against
//! independent references and records them as checks with fixed tolerances.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::config::{ConfigText, OneWaySection};
use super::report::Report;
use crate::error::{Error, Result};
use crate::fullwave::{
    fd_convergence_probe, green_2d, run_fullwave, FdGrid, FullWaveConfig, Source, SourceShape, Sponge, Wavelet,
};
use crate::gridfile::GridFile;
use crate::medium::{Density, Domain, Medium, Slowness};
use crate::metrics::{compare_sections, cube_section, pick_wavefront, window_energy, Window, DEFAULT_MIN_SNR};
use crate::oneway::{march, propagate, propagate_fields, reconstruct_u, slice_norm, OneWayConfig, PlaneTrace, SolverKind, Stepper};
use crate::psdo::{fft_forward, fft_inverse, FreqField, LateralGrid};
use crate::rays::{attenuation_along_ray, on_branch, trace_ray, EventKind, RayOptions, Termination};
use crate::symbolcalc::{compose, scaling_slope, sqrt_symbol, verify_normalization_shift, Symbol, SymbolA, LAMBDAS};
use crate::symbols::{
    eval_big_b, eval_damping, eval_zeroth_correction, zeroth_correction_generic, ConeConfig, DampingConfig,
    Normalization, PhasePoint, Sign,
};

/// Tolerances of the verification checks.
pub mod limits {
    pub const CN_ORDER: f64 = 2.0;
    pub const CN_ORDER_TOL: f64 = 0.2;
    pub const EXP_STEPPER: f64 = 1e-10;
    pub const SQRT_RESIDUAL_SLOPE: f64 = 0.3;
    pub const CLOSED_FORM: f64 = 1e-10;
    pub const ZEROTH_ORDER: f64 = 1e-10;
    pub const NORMALIZATION_SHIFT: f64 = 1e-12;
    pub const NORM_DRIFT: f64 = 1e-10;
    pub const NORM_INCREASE: f64 = 1e-10;
    pub const ATTENUATION_HOMOGENEOUS: f64 = 0.05;
    pub const ATTENUATION_RAY: f64 = 0.2;
    pub const TIME_SHIFT_DT: f64 = 1.5;
    pub const AMPLITUDE: f64 = 0.1;
    pub const TURNED_ENERGY: f64 = 0.01;
    pub const HAMILTONIAN_DRIFT: f64 = 1e-8;
    pub const TURNING_DEPTH: f64 = 1e-6;
    pub const FD_ORDER: f64 = 2.0;
    pub const FD_ORDER_TOL: f64 = 0.3;
    pub const FD_ARRIVAL_CELLS: f64 = 1.0;
}

/// A file produced by an experiment, written next to the metrics.
#[derive(Clone, Debug)]
pub enum Artifact {
    Grid { stem: String, grid: GridFile },
    Text { name: String, text: String },
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    fn absorb(&mut self, other: Outcome) {
        self.report.absorb("", other.report);
        self.artifacts.extend(other.artifacts);
    }
}

fn require_homogeneous(m: &Medium, what: &str) -> Result<f64> {
    if !(m.is_laterally_homogeneous() && m.is_depth_independent()) {
        return Err(Error::Config(format!("{what} needs a homogeneous medium")));
    }
    let d = m.domain();
    Ok(m.eval(d.z_min, d.x_min)?.0)
}

fn centred_grid(n: usize, dx: f64) -> Result<LateralGrid> {
    LateralGrid::new(n, dx, -0.5 * n as f64 * dx)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Least-squares slope of `log y` against `log x`.
fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn spectrum(v: &[C64]) -> Vec<C64> {
    let mut s = v.to_vec();
    fft_forward(&mut s);
    s
}

fn spatial(s: &[C64]) -> Vec<C64> {
    let mut v = s.to_vec();
    fft_inverse(&mut v);
    v
}

/// Slowness wavenumber giving propagation angle `angle` (radians) toward
/// `+x` on the downgoing branch.
fn launch(m: &Medium, z: f64, x: f64, angle: f64, tau: f64) -> Result<PhasePoint> {
    let nu = m.eval(z, x)?.0;
    on_branch(m, z, x, -nu * angle.sin() * tau, tau, Sign::Plus)
}

// ---------------------------------------------------------------------------
// Homogeneous dispersion

/// One-way marching in a homogeneous medium against the exact multiplier
/// solution.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionParams {
    pub n: usize,
    pub dx: f64,
    pub z0: f64,
    pub z1: f64,
    /// Crank–Nicolson step sizes, coarse to fine.
    pub dz: Vec<f64>,
    pub tau_min: f64,
    pub tau_max: f64,
    pub n_tau: usize,
    /// Centre of the initial angular spectrum in degrees.
    pub beam_angle: f64,
    /// Width of the initial spectrum in `sin θ`.
    pub sin_spread: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub c_zeta: f64,
}

impl DispersionParams {
    pub fn cone(&self) -> Result<ConeConfig> {
        ConeConfig::from_degrees(self.theta1, self.theta2, self.c_zeta)
    }
}

pub fn dispersion(m: &Medium, p: &DispersionParams) -> Result<Outcome> {
    let nu = require_homogeneous(m, "the dispersion experiment")?;
    if p.dz.len() < 2 {
        return Err(Error::Config("the dispersion experiment needs at least two step sizes".into()));
    }
    let cone = p.cone()?;
    let grid = centred_grid(p.n, p.dx)?;
    let taus = linspace(p.tau_min, p.tau_max, p.n_tau);
    let depth = p.z1 - p.z0;
    let s_max = cone.theta1.sin();
    let s0 = p.beam_angle.to_radians().sin();

    // Initial spectra inside the θ1 cone and their exact continuation.
    let mut init = Vec::new();
    let mut exact = Vec::new();
    for &tau in &taus {
        let (mut w, mut e) = (Vec::new(), Vec::new());
        for k in 0..p.n {
            let s = grid.xi(k) / (nu * tau);
            let a = if s.abs() < s_max { (-0.5 * ((s - s0) / p.sin_spread).powi(2)).exp() } else { 0.0 };
            let b = -tau * nu * (1.0 - s * s).max(0.0).sqrt();
            w.push(C64::from(a));
            e.push(C64::from(a) * C64::from_polar(1.0, b * depth));
        }
        init.push(FreqField::new(grid, tau, p.z0, spatial(&w))?);
        exact.push(e);
    }
    let peak = exact.iter().flatten().fold(0.0f64, |m, c| m.max(c.norm()));

    let run = |stepper: Stepper, dz: f64| -> Result<Vec<Vec<C64>>> {
        let mut cfg = OneWayConfig::new(grid, taus.clone(), p.z0, p.z1, dz, cone);
        cfg.stepper = stepper;
        let cube = propagate_fields(&init, &cfg, m)?;
        let iz = cube.depths.len() - 1;
        Ok((0..taus.len()).map(|it| cube.slice(iz, it).to_vec()).collect())
    };

    // Per-mode phase errors of Crank–Nicolson over the dz sequence.
    let n_f = p.n as f64;
    let mut errors: Vec<Vec<f64>> = Vec::new();
    for &dz in &p.dz {
        let fin = run(Stepper::CrankNicolson, dz)?;
        let mut e = Vec::new();
        for (it, u) in fin.iter().enumerate() {
            let s = spectrum(u);
            for k in 0..p.n {
                if exact[it][k].norm() >= 1e-3 * peak {
                    e.push((s[k] / (exact[it][k] * n_f)).arg().abs());
                }
            }
        }
        errors.push(e);
    }
    let mut worst = 0.0f64;
    let mut slope_min = f64::INFINITY;
    let mut slope_max = f64::NEG_INFINITY;
    for mode in 0..errors[0].len() {
        let y: Vec<f64> = errors.iter().map(|e| e[mode]).collect();
        let slope = log_slope(&p.dz, &y);
        slope_min = slope_min.min(slope);
        slope_max = slope_max.max(slope);
        worst = worst.max((slope - limits::CN_ORDER).abs());
    }
    let all_slope = log_slope(
        &p.dz,
        &errors.iter().map(|e| e.iter().cloned().fold(0.0, f64::max)).collect::<Vec<_>>(),
    );

    // The exponential stepper reproduces the multiplier.
    let fin = run(Stepper::MatrixExponential, p.dz[0])?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (it, u) in fin.iter().enumerate() {
        let want = spatial(&exact[it]);
        num += u.iter().zip(&want).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        den += want.iter().map(|b| b.norm_sqr()).sum::<f64>();
    }
    let exp_error = (num / den).sqrt();

    let mut out = Outcome::default();
    let r = &mut out.report;
    r.metric("cn_modes", errors[0].len() as f64);
    r.metric("cn_slope_min", slope_min);
    r.metric("cn_slope_max", slope_max);
    r.metric("cn_slope_of_max_error", all_slope);
    r.metric("cn_phase_error_coarse", errors[0].iter().cloned().fold(0.0, f64::max));
    r.at_most("cn_slope_deviation", worst, limits::CN_ORDER_TOL);
    r.at_most("exp_stepper_error", exp_error, limits::EXP_STEPPER);
    let mut table = String::from("# dz max_phase_error\n");
    for (dz, e) in p.dz.iter().zip(&errors) {
        table.push_str(&format!("{dz:.6e} {:.6e}\n", e.iter().cloned().fold(0.0, f64::max)));
    }
    out.artifacts.push(Artifact::Text { name: "cn_convergence.txt".into(), text: table });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Attenuation

/// A single plane-wave mode at a fixed angle inside the damping zone.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttenuationParams {
    /// Propagation angle in degrees, between the two cone angles.
    pub angle: f64,
    pub tau: f64,
    pub depth: f64,
    pub dz: f64,
    pub eta: f64,
}

pub fn homogeneous_attenuation(m: &Medium, grid_from: &DispersionParams, p: &AttenuationParams) -> Result<Outcome> {
    let nu = require_homogeneous(m, "the homogeneous attenuation experiment")?;
    let cone = grid_from.cone()?;
    let grid = centred_grid(grid_from.n, grid_from.dx)?;
    let damping = DampingConfig::new(p.eta, cone, 3)?;
    let l = grid.length();
    let k = (nu * p.tau * p.angle.to_radians().sin() * l / (2.0 * PI)).round();
    let xi = 2.0 * PI * k / l;
    let angle = (xi / (nu * p.tau)).asin();
    if !(angle > cone.theta1 && angle < cone.theta2) {
        return Err(Error::Config(format!(
            "attenuation mode at {:.2} degrees is not between the cone angles",
            angle.to_degrees()
        )));
    }
    let z0 = grid_from.z0;
    let u0: Vec<C64> = grid.xs().iter().map(|&x| C64::from_polar(1.0, xi * x)).collect();
    let mut cfg = OneWayConfig::new(grid, vec![p.tau], z0, z0 + p.depth, p.dz, cone);
    cfg.damping = Some(damping);
    let fin = march(&FreqField::new(grid, p.tau, z0, u0.clone())?, &cfg, m, |_, _, _| Ok(()))?;
    let measured = slice_norm(&fin.values, &grid) / slice_norm(&u0, &grid);
    let c = eval_damping(m, &PhasePoint::new(z0, 0.0, xi, p.tau), &damping)?;
    let predicted = (-c * p.depth).exp();

    let mut out = Outcome::default();
    let r = &mut out.report;
    r.metric("attenuation_angle_deg", angle.to_degrees());
    r.metric("attenuation_c", c);
    r.metric("attenuation_measured", measured);
    r.metric("attenuation_predicted", predicted);
    r.at_most("attenuation_homogeneous_error", (measured / predicted - 1.0).abs(), limits::ATTENUATION_HOMOGENEOUS);
    Ok(out)
}

/// A damped beam in a depth-varying medium against the ray prediction.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayAttenuationParams {
    pub z0: f64,
    pub z1: f64,
    /// Launch angle at `z0` in degrees.
    pub angle: f64,
    pub tau: f64,
    pub dz: f64,
    pub n: usize,
    pub dx: f64,
    /// Gaussian beam half-width.
    pub width: f64,
}

pub fn ray_attenuation(m: &Medium, damping: &DampingConfig, p: &RayAttenuationParams) -> Result<Outcome> {
    if !m.is_laterally_homogeneous() {
        return Err(Error::Config("the ray attenuation experiment needs a laterally homogeneous medium".into()));
    }
    let grid = centred_grid(p.n, p.dx)?;
    let nu0 = m.eval(p.z0, 0.0)?.0;
    let xi = nu0 * p.angle.to_radians().sin() * p.tau;
    let u0: Vec<C64> = grid
        .xs()
        .iter()
        .map(|&x| C64::from_polar((-0.5 * (x / p.width).powi(2)).exp(), xi * x))
        .collect();
    let u0 = FreqField::new(grid, p.tau, p.z0, u0)?;
    let peak = |d: Option<DampingConfig>| -> Result<f64> {
        let mut cfg = OneWayConfig::new(grid, vec![p.tau], p.z0, p.z1, p.dz, damping.cone);
        cfg.stepper = Stepper::MatrixExponential;
        cfg.damping = d;
        let fin = march(&u0, &cfg, m, |_, _, _| Ok(()))?;
        Ok(fin.values.iter().fold(0.0f64, |a, c| a.max(c.norm())))
    };
    let measured = peak(Some(*damping))? / peak(None)?;

    let start = on_branch(m, p.z0, 0.0, xi, p.tau, Sign::Plus)?;
    let t_end = 10.0 * (p.z1 - p.z0).abs() * m.bounds().nu_max / (1.0 - damping.cone.theta2.sin());
    let ray = trace_ray(m, &start, &RayOptions::new(t_end, 0.002))?;
    let att = attenuation_along_ray(m, &ray, damping, p.z0, p.z1)?;

    let mut out = Outcome::default();
    let r = &mut out.report;
    r.metric("ray_attenuation_measured", measured);
    r.metric("ray_attenuation_predicted", att.factor);
    r.at_most("attenuation_ray_error", (measured / att.factor - 1.0).abs(), limits::ATTENUATION_RAY);
    r.at_most("hamiltonian_drift_attenuation_ray", ray.max_hamiltonian_drift(m)?, limits::HAMILTONIAN_DRIFT);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Full-wave reference

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdCheckParams {
    /// Grid corner `(z, x)` of both experiments.
    pub origin: [f64; 2],
    pub h: f64,
    pub n: usize,
    pub source_z: f64,
    pub source_x: f64,
    pub freq: f64,
    pub delay: f64,
    pub t_end: f64,
    /// Receivers as `[z, x]` pairs.
    pub receivers: Vec<[f64; 2]>,
    pub probe_n: usize,
    pub probe_extent: f64,
    pub probe_width: f64,
    pub probe_sigma: f64,
    pub probe_delay: f64,
    pub probe_t_end: f64,
    pub probe_sponge: usize,
}

pub fn fd_checks(m: &Medium, p: &FdCheckParams) -> Result<Outcome> {
    let nu = require_homogeneous(m, "the full-wave arrival check")?;
    let g = FdGrid::new(p.n, p.n, p.origin[0], p.origin[1], p.h, p.h)?;
    let dt = 0.5 * nu * p.h;
    let mut c = FullWaveConfig::new(g, dt, (p.t_end / dt).round() as usize);
    let w = Wavelet::Ricker { freq: p.freq, delay: p.delay };
    c.sources = vec![Source { shape: SourceShape::Point { z: p.source_z, x: p.source_x }, wavelet: w, amplitude: 1.0 }];
    c.receivers = p.receivers.iter().map(|r| (r[0], r[1])).collect();
    let out = run_fullwave(&c, m)?;
    let mut worst = 0.0f64;
    let mut table = String::from("# z x distance t_fd t_exact\n");
    for (k, &(z, x)) in c.receivers.iter().enumerate() {
        let d = (z - p.source_z).hypot(x - p.source_x);
        let fd = pick_wavefront(&out.receivers[k], 0.0, dt, DEFAULT_MIN_SNR);
        let exact: Vec<f64> = (0..c.nt).map(|n| green_2d(nu, d, n as f64 * dt, &w)).collect();
        let ex = pick_wavefront(&exact, 0.0, dt, DEFAULT_MIN_SNR);
        let cells = if fd.valid && ex.valid { (fd.time - ex.time).abs() / dt.max(nu * p.h) } else { f64::INFINITY };
        worst = worst.max(cells);
        table.push_str(&format!("{z} {x} {d:.6} {:.6} {:.6}\n", fd.time, ex.time));
    }

    let h = p.probe_extent / (p.probe_n - 1) as f64;
    let pg = FdGrid::new(p.probe_n, p.probe_n, p.origin[0], p.origin[1], h, h)?;
    let pdt = 0.5 * nu * h;
    let mut pc = FullWaveConfig::new(pg, pdt, (p.probe_t_end / pdt).round() as usize);
    pc.sponge = Sponge { width: p.probe_sponge, ..Sponge::default() };
    let centre = p.origin[0] + 0.5 * p.probe_extent;
    let centre_x = p.origin[1] + 0.5 * p.probe_extent;
    pc.sources = vec![Source {
        shape: SourceShape::Gaussian { z: centre, x: centre_x, width: p.probe_width },
        wavelet: Wavelet::Gaussian { sigma: p.probe_sigma, delay: p.probe_delay },
        amplitude: 1.0,
    }];
    let probe = fd_convergence_probe(&pc, m)?;

    let mut o = Outcome::default();
    let r = &mut o.report;
    r.metric("fd_order", probe.order);
    r.metric("fd_difference_coarse", probe.differences[0]);
    r.metric("fd_difference_fine", probe.differences[1]);
    r.at_most("fd_order_deviation", (probe.order - limits::FD_ORDER).abs(), limits::FD_ORDER_TOL);
    r.at_most("fd_arrival_error_cells", worst, limits::FD_ARRIVAL_CELLS);
    o.artifacts.push(Artifact::Text { name: "fd_arrivals.txt".into(), text: table });
    Ok(o)
}

// ---------------------------------------------------------------------------
// Symbol calculus

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolParams {
    pub theta1: f64,
    pub theta2: f64,
    pub c_zeta: f64,
    /// Random points for the zeroth-order and normalization checks.
    pub n_points: usize,
    /// Random points for the two-term closed form.
    pub n_closed_form: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Distance of random points from the domain boundary.
    pub margin: f64,
    /// Base points `[z, x, sin θ, τ]` of the scaling estimates.
    pub slope_points: Vec<[f64; 4]>,
}

fn random_point(rng: &mut ChaCha8Rng, m: &Medium, p: &SymbolParams, max_sin: f64) -> Result<PhasePoint> {
    let d = m.domain();
    let z = rng.random_range(d.z_min + p.margin..d.z_max - p.margin);
    let x = rng.random_range(d.x_min + p.margin..d.x_max - p.margin);
    let tau = rng.random_range(p.tau_min..p.tau_max) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let s = rng.random_range(-max_sin..max_sin);
    let nu = m.eval(z, x)?.0;
    Ok(PhasePoint::new(z, x, s * nu * tau.abs(), tau))
}

/// Normalization shifts in media where `−∂D⁻¹/∂z · D` is known by hand.
fn hand_cases() -> Result<Vec<(&'static str, Medium, f64)>> {
    let dom = Domain::new(-1.0, 1.0, -1.0, 1.0)?;
    Ok(vec![
        (
            "linear_velocity",
            Medium::analytic(
                Slowness::LinearVelocity { v0: 1.0, dv_dz: 0.5, dv_dx: 0.0 },
                Density::Constant { rho: 1.0 },
                dom,
            )?,
            -0.25,
        ),
        (
            "exponential_density",
            Medium::analytic(Slowness::Constant { nu: 1.0 }, Density::ExponentialZ { rho0: 1.0, rate: 1.0 }, dom)?,
            -0.5,
        ),
    ])
}

/// Relative size below which a symbol residual counts as exact.
const ROUNDOFF: f64 = 1e-12;

pub fn symbol_checks(m: &Medium, p: &SymbolParams, seed: u64) -> Result<Outcome> {
    if p.slope_points.is_empty() {
        return Err(Error::Config("symbol checks need at least one slope point".into()));
    }
    let cone = ConeConfig::from_degrees(p.theta1, p.theta2, p.c_zeta)?;
    let medium = Arc::new(m.clone());
    let a: Symbol = Arc::new(SymbolA { medium: medium.clone() });
    let t = sqrt_symbol(a.clone(), 2, &cone)?;
    let tt = compose(t.clone(), t.clone(), 2)?;
    let mut out = Outcome::default();
    let r = &mut out.report;

    let mut worst_slope = f64::NEG_INFINITY;
    let mut a_slope = f64::INFINITY;
    let mut exact_points = 0;
    for q in &p.slope_points {
        let nu = m.eval(q[0], q[1])?.0;
        let base = PhasePoint::new(q[0], q[1], q[2] * nu * q[3].abs(), q[3]);
        let residual = |l: f64| -> Result<f64> {
            let s = base.scaled(l);
            Ok((tt.eval(&s)? - a.eval(&s)?).norm())
        };
        // a residual at roundoff level is bounded; its slope is noise
        let mut exact = true;
        for &l in &LAMBDAS {
            exact &= residual(l)? <= ROUNDOFF * a.eval(&base.scaled(l))?.norm();
        }
        let slope = if exact {
            exact_points += 1;
            0.0
        } else {
            scaling_slope(residual, &LAMBDAS)?
        };
        worst_slope = worst_slope.max(slope);
        a_slope = a_slope.min(scaling_slope(|l| Ok(a.eval(&base.scaled(l))?.norm()), &LAMBDAS)?);
    }
    r.metric("radicand_slope", a_slope);
    r.metric("sqrt_residual_exact_points", exact_points as f64);
    r.at_most("sqrt_residual_slope", worst_slope, limits::SQRT_RESIDUAL_SLOPE);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interior = 0.99 * cone.theta2.sin();
    let mut closed = 0.0f64;
    for _ in 0..p.n_closed_form {
        let q = random_point(&mut rng, m, p, interior)?;
        let want = eval_big_b(m, &q, Sign::Plus, Normalization::Unitary, None)?;
        closed = closed.max((t.eval(&q)? - want).norm() / (1.0 + want.norm()));
    }
    r.at_most("two_term_closed_form_error", closed, limits::CLOSED_FORM);

    let mut zeroth = 0.0f64;
    let mut shift = 0.0f64;
    let mut shift_fd = 0.0f64;
    for _ in 0..p.n_points {
        let q = random_point(&mut rng, m, p, interior)?;
        let printed = eval_zeroth_correction(m, &q)?;
        let generic = zeroth_correction_generic(m, &q)?;
        zeroth = zeroth.max((printed - generic).abs() / (1.0 + printed.abs()));
        let s = verify_normalization_shift(m, &q)?;
        let scale = 1.0 + s.shift.abs();
        shift = shift
            .max((s.b_difference - s.shift).abs() / scale)
            .max((s.shift_product_rule - s.shift).abs() / scale);
        shift_fd = shift_fd.max((s.shift_fd - s.shift).abs() / scale);
    }
    for (name, hm, expected) in hand_cases()? {
        let s = verify_normalization_shift(&hm, &PhasePoint::new(0.0, 0.0, 0.0, 1.0))?;
        let e = [s.shift, s.shift_product_rule, s.b_difference]
            .iter()
            .fold(0.0f64, |acc, v| acc.max((v - expected).abs()));
        r.metric(&format!("hand_case_{name}"), s.b_difference);
        shift = shift.max(e);
    }
    r.metric("normalization_shift_fd_error", shift_fd);
    r.at_most("zeroth_order_error", zeroth, limits::ZEROTH_ORDER);
    r.at_most("normalization_shift_error", shift, limits::NORMALIZATION_SHIFT);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Unitarity and dissipation

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitarityParams {
    pub n: usize,
    pub dx: f64,
    pub z0: f64,
    pub dz: f64,
    pub steps: usize,
    pub taus: Vec<f64>,
    pub eta: f64,
}

pub fn unitarity(m: &Medium, cone: ConeConfig, p: &UnitarityParams, seed: u64) -> Result<Outcome> {
    let grid = centred_grid(p.n, p.dx)?;
    let z1 = p.z0 + p.steps as f64 * p.dz;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drift = 0.0f64;
    let mut increase = f64::NEG_INFINITY;
    let mut decay = 1.0f64;
    for &tau in &p.taus {
        let v: Vec<C64> =
            (0..p.n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let u0 = FreqField::new(grid, tau, p.z0, v)?;
        let mut cfg = OneWayConfig::new(grid, vec![tau], p.z0, z1, p.dz, cone);
        cfg.stepper = Stepper::CrankNicolsonMidpoint;
        cfg.solver = SolverKind::Direct;
        cfg.strict_unitary = true;

        let mut n0 = None;
        march(&u0, &cfg, m, |_, _, u| {
            let n = slice_norm(u, &grid);
            let first = *n0.get_or_insert(n);
            drift = drift.max((n / first - 1.0).abs());
            Ok(())
        })?;

        cfg.damping = Some(DampingConfig::new(p.eta, cone, 3)?);
        cfg.monotone_damping = true;
        let mut prev: Option<f64> = None;
        let mut first = 0.0;
        let mut last = 0.0;
        march(&u0, &cfg, m, |k, _, u| {
            let n = slice_norm(u, &grid);
            if let Some(q) = prev {
                increase = increase.max((n - q) / q);
            }
            if k == 0 {
                first = n;
            }
            last = n;
            prev = Some(n);
            Ok(())
        })?;
        decay = decay.min(last / first);
    }
    let mut out = Outcome::default();
    let r = &mut out.report;
    r.metric("damped_norm_ratio_min", decay);
    r.at_most("unitarity_norm_drift", drift, limits::NORM_DRIFT);
    r.at_most("dissipation_max_increase", increase, limits::NORM_INCREASE);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Transmission through full-wave and one-way stages

/// Receiver selection for traveltime and amplitude comparisons.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverParams {
    /// Half-width of the ray fan around the source direction, in degrees.
    pub fan_half_angle: f64,
    pub fan_step: f64,
    /// Cells kept clear of the sponge on top of its width.
    #[serde(default = "default_margin")]
    pub sponge_margin: usize,
    #[serde(default = "default_snr")]
    pub min_snr: f64,
    #[serde(default = "default_min_receivers")]
    pub min_receivers: usize,
}

fn default_margin() -> usize {
    20
}

fn default_snr() -> f64 {
    DEFAULT_MIN_SNR
}

fn default_min_receivers() -> usize {
    3
}

struct Fan {
    xs: Vec<f64>,
    drift: f64,
}

/// Lateral positions at `z1` of rays from `(zs, xs)` that stay inside the
/// `θ1` cone between `z0` and `z1`.
#[allow(clippy::too_many_arguments)]
fn ray_fan(m: &Medium, zs: f64, xs: f64, centre: f64, rp: &ReceiverParams, z0: f64, z1: f64, theta1: f64) -> Result<Fan> {
    if !(rp.fan_step > 0.0) {
        return Err(Error::Config("fan_step must be positive".into()));
    }
    let n = (2.0 * rp.fan_half_angle / rp.fan_step).round() as usize;
    let t_end = 4.0 * (z1 - zs).abs() * m.bounds().nu_max / theta1.cos();
    let mut fan = Fan { xs: Vec::new(), drift: 0.0 };
    for k in 0..=n {
        let angle = (centre - rp.fan_half_angle + k as f64 * rp.fan_step).to_radians();
        let ray = trace_ray(m, &launch(m, zs, xs, angle, 1.0)?, &RayOptions::new(t_end, 0.005))?;
        fan.drift = fan.drift.max(ray.max_hamiltonian_drift(m)?);
        let mut inside = true;
        for s in ray.samples.iter().filter(|s| s.z >= z0 && s.z <= z1) {
            let nu = m.eval(s.z, s.x)?.0;
            inside &= (s.xi / s.tau).abs() / nu <= theta1.sin();
        }
        if let (true, Some(&t)) = (inside, ray.depth_crossings(m, z1)?.first()) {
            fan.xs.push(ray.state_at(m, t)?.x);
        }
    }
    Ok(fan)
}

fn source_point(s: &Source) -> (f64, f64, f64) {
    match s.shape {
        SourceShape::Point { z, x } | SourceShape::Gaussian { z, x, .. } => (z, x, 0.0),
        SourceShape::Beam { z, x, angle, .. } => (z, x, angle.to_degrees()),
    }
}

fn wavelet_delay(s: &Source) -> f64 {
    match s.wavelet {
        Wavelet::Ricker { delay, .. } | Wavelet::Gaussian { delay, .. } => delay,
    }
}

/// Full-wave traces at the requested depths and the matching one-way
/// sections, both decimated onto the one-way lateral grid.
struct Stages {
    fullwave: Vec<PlaneTrace>,
    oneway: Vec<PlaneTrace>,
    warnings: Vec<String>,
    dt: f64,
}

fn run_stages(m: &Medium, fd: &FullWaveConfig, ow: &OneWaySection, depths: &[f64], src: &ConfigText) -> Result<Stages> {
    let mut fd = fd.clone();
    fd.record_depths = std::iter::once(ow.z0).chain(depths.iter().copied()).collect();
    let out = run_fullwave(&fd, m)?;
    let tr0 = ow.trace_to_grid(&out.traces[0], &fd, src)?;
    let (count, left) = ow.embedding(&fd, src)?;
    let mut cfg = ow.build(tr0.grid, fd.dt, tr0.nt(), src)?;
    cfg.store_every = 1;
    let cube = propagate(&tr0.padded(ow.n_fft), &cfg, m)?;
    let u = reconstruct_u(&cube, &cfg, m)?;
    let mut oneway = Vec::new();
    let mut fullwave = Vec::new();
    for (k, &z) in depths.iter().enumerate() {
        let iz = u
            .depth_index(z)
            .ok_or_else(|| src.invalid("oneway", "dz", format!("depth {z} is not on the one-way step grid")))?;
        oneway.push(cube_section(&u, iz)?.truncated(tr0.nt()).window(left, count)?);
        fullwave.push(out.traces[k + 1].decimated(ow.stride)?);
    }
    Ok(Stages { fullwave, oneway, warnings: cube.warnings, dt: fd.dt })
}

#[allow(clippy::too_many_arguments)]
fn fidelity(
    r: &mut Report,
    prefix: &str,
    fw: &PlaneTrace,
    ow: &PlaneTrace,
    fan: &Fan,
    fd: &FullWaveConfig,
    rp: &ReceiverParams,
    dt: f64,
) -> Result<()> {
    let g = &fd.grid;
    let clear = (fd.sponge.width + rp.sponge_margin) as f64 * g.hx;
    let mut w = Window::all();
    w.min_snr = rp.min_snr;
    w.x_min = fan.xs.iter().cloned().fold(f64::INFINITY, f64::min).max(g.x(0) + clear);
    w.x_max = fan.xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).min(g.x(g.nx - 1) - clear);
    let met = compare_sections(fw, ow, &w)?;
    r.metric(&format!("{prefix}_x_min"), w.x_min);
    r.metric(&format!("{prefix}_x_max"), w.x_max);
    r.metric(&format!("{prefix}_misfit"), met.misfit);
    r.at_most(&format!("{prefix}_time_shift_dt"), met.max_abs_shift() / dt, limits::TIME_SHIFT_DT);
    r.at_most(&format!("{prefix}_amplitude_error"), met.max_ratio_error(), limits::AMPLITUDE);
    r.at_least(&format!("{prefix}_valid_receivers"), met.n_valid() as f64, rp.min_receivers as f64);
    Ok(())
}

fn section_artifacts(out: &mut Outcome, items: &[(&str, &PlaneTrace)]) -> Result<()> {
    for (stem, tr) in items {
        out.artifacts.push(Artifact::Grid { stem: stem.to_string(), grid: tr.to_grid_file()? });
    }
    Ok(())
}

pub struct LensInputs<'a> {
    pub fullwave: FullWaveConfig,
    pub source: Source,
    pub oneway: &'a OneWaySection,
    pub receivers: &'a ReceiverParams,
}

pub fn lens_transmission(m: &Medium, inp: &LensInputs, src: &ConfigText) -> Result<Outcome> {
    let ow = inp.oneway;
    let mut fd = inp.fullwave.clone();
    fd.sources = vec![inp.source];
    let st = run_stages(m, &fd, ow, &[ow.z1], src)?;
    let (zs, xs, centre) = source_point(&inp.source);
    let cone = ow.cone(src)?;
    let fan = ray_fan(m, zs, xs, centre, inp.receivers, ow.z0, ow.z1, cone.theta1)?;

    let mut out = Outcome::default();
    fidelity(&mut out.report, "transmission", &st.fullwave[0], &st.oneway[0], &fan, &fd, inp.receivers, st.dt)?;
    out.report.metric("dt", st.dt);
    out.report.metric("evanescent_warnings", st.warnings.len() as f64);
    out.report.at_most("hamiltonian_drift", fan.drift, limits::HAMILTONIAN_DRIFT);
    out.report.warnings.extend(st.warnings);
    section_artifacts(&mut out, &[("fullwave_z1", &st.fullwave[0]), ("oneway_z1", &st.oneway[0])])?;
    Ok(out)
}

/// Space-time window around the turned arrival.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnedWindowParams {
    /// Recording depth where the turned arrival is measured.
    pub depth: f64,
    pub half_t: f64,
    pub half_x: f64,
    pub ray_t_end: f64,
}

pub struct TurningInputs<'a> {
    pub fullwave: FullWaveConfig,
    pub turning_beam: Source,
    pub fidelity_beam: Source,
    pub oneway: &'a OneWaySection,
    pub window: &'a TurnedWindowParams,
    pub receivers: &'a ReceiverParams,
}

pub fn gradient_turning(m: &Medium, inp: &TurningInputs, src: &ConfigText) -> Result<Outcome> {
    let ow = inp.oneway;
    let win = inp.window;
    let mut fd = inp.fullwave.clone();
    fd.sources = vec![inp.turning_beam, inp.fidelity_beam];

    // The turned arrival from the central ray of the steep beam.
    let (zs, xs, angle) = source_point(&inp.turning_beam);
    let ray = trace_ray(m, &launch(m, zs, xs, angle.to_radians(), 1.0)?, &RayOptions::new(win.ray_t_end, 0.005))?;
    if !ray.events.iter().any(|e| e.kind == EventKind::Turning) {
        return Err(src.invalid("turning_beam", "angle", "the central ray does not turn within ray_t_end"));
    }
    let crossings = ray.depth_crossings(m, win.depth)?;
    if crossings.len() < 2 {
        return Err(src.invalid("window", "depth", "the turned ray does not cross the window depth on its way up"));
    }
    let up = ray.state_at(m, *crossings.last().expect("two crossings"))?;
    let t_a = wavelet_delay(&inp.turning_beam) + up.t;

    let st = run_stages(m, &fd, ow, &[win.depth, ow.z1], src)?;
    let e_fw = window_energy(&st.fullwave[0], t_a, win.half_t, up.x, win.half_x);
    let e_ow = window_energy(&st.oneway[0], t_a, win.half_t, up.x, win.half_x);

    let (zf, xf, centre) = source_point(&inp.fidelity_beam);
    let cone = ow.cone(src)?;
    let fan = ray_fan(m, zf, xf, centre, inp.receivers, ow.z0, ow.z1, cone.theta1)?;

    let mut out = Outcome::default();
    let r = &mut out.report;
    r.metric("turned_arrival_t", t_a);
    r.metric("turned_arrival_x", up.x);
    r.metric("turned_energy_fullwave", e_fw);
    r.metric("turned_energy_oneway", e_ow);
    r.at_most("turned_energy_fraction", if e_fw > 0.0 { e_ow / e_fw } else { f64::INFINITY }, limits::TURNED_ENERGY);
    fidelity(r, "fidelity", &st.fullwave[1], &st.oneway[1], &fan, &fd, inp.receivers, st.dt)?;
    r.metric("dt", st.dt);
    r.metric("evanescent_warnings", st.warnings.len() as f64);
    r.at_most("hamiltonian_drift", fan.drift.max(ray.max_hamiltonian_drift(m)?), limits::HAMILTONIAN_DRIFT);
    r.warnings.extend(st.warnings);
    section_artifacts(
        &mut out,
        &[
            ("fullwave_window_depth", &st.fullwave[0]),
            ("oneway_window_depth", &st.oneway[0]),
            ("fullwave_z1", &st.fullwave[1]),
            ("oneway_z1", &st.oneway[1]),
        ],
    )?;
    out.artifacts.push(Artifact::Text { name: "turning_ray.txt".into(), text: ray.to_table() });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Rays

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayParams {
    pub z0: f64,
    pub x0: f64,
    pub tau: f64,
    /// `|ξ/τ|` of the fan; each is launched toward both sides.
    pub ratios: Vec<f64>,
    pub t_end: f64,
    pub dt_out: f64,
    /// `|ξ/τ|` of the ray whose turning depth is checked.
    pub turning_ratio: f64,
}

/// Depth below `z0` where `ν(z, x0) = ratio`, by bisection.
fn snell_turning_depth(m: &Medium, z0: f64, x0: f64, ratio: f64) -> Result<f64> {
    let f = |z: f64| -> Result<f64> { Ok(m.eval(z, x0)?.0 - ratio) };
    let (mut lo, mut hi) = (z0, m.domain().z_max);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if flo * fhi > 0.0 {
        return Err(Error::Config(format!("no turning depth for |xi/tau| = {ratio} inside the domain")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? * flo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn ray_atlas(m: &Medium, p: &RayParams) -> Result<Outcome> {
    let mut out = Outcome::default();
    let mut drift = 0.0f64;
    let mut k = 0;
    for &ratio in &p.ratios {
        for side in [1.0, -1.0] {
            let start = on_branch(m, p.z0, p.x0, side * ratio * p.tau, p.tau, Sign::Plus)?;
            let ray = trace_ray(m, &start, &RayOptions::new(p.t_end, p.dt_out))?;
            drift = drift.max(ray.max_hamiltonian_drift(m)?);
            out.artifacts.push(Artifact::Text { name: format!("ray_{k:03}.txt"), text: ray.to_table() });
            k += 1;
        }
    }
    let start = on_branch(m, p.z0, p.x0, p.turning_ratio * p.tau, p.tau, Sign::Plus)?;
    let mut opts = RayOptions::new(p.t_end, p.dt_out);
    opts.stop_at_turning = true;
    let ray = trace_ray(m, &start, &opts)?;
    drift = drift.max(ray.max_hamiltonian_drift(m)?);
    if ray.termination != Termination::Turning {
        return Err(Error::Config("the turning ray does not turn within t_end".into()));
    }
    let z_turn = ray.end().z;
    let expected = snell_turning_depth(m, p.z0, p.x0, p.turning_ratio)?;
    out.artifacts.push(Artifact::Text { name: "turning_ray.txt".into(), text: ray.to_table() });

    let r = &mut out.report;
    r.metric("turning_depth", z_turn);
    r.metric("turning_depth_expected", expected);
    r.at_most("turning_depth_error", (z_turn - expected).abs(), limits::TURNING_DEPTH);
    r.at_most("hamiltonian_drift", drift, limits::HAMILTONIAN_DRIFT);
    Ok(out)
}

pub(crate) fn merge(outcomes: impl IntoIterator<Item = Outcome>) -> Outcome {
    let mut all = Outcome::default();
    for o in outcomes {
        all.absorb(o);
    }
    all
}
