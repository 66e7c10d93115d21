//! Null bicharacteristics of the acoustic operator, parameterized by time.
//!
//! With `p = ρ⁻¹(ν²τ² − ξ² − ζ²)` and the Hamiltonian flow rescaled so that
//! `dt/ds = 1`, rays on `p = 0` satisfy
//!
//! ```text
//! dz/dt = −ζ/(ν²τ),   dx/dt = −ξ/(ν²τ),
//! dζ/dt = −τ ∂zν/ν,   dξ/dt = −τ ∂xν/ν,   dτ/dt = 0.
//! ```
//!
//! The `+` branch starts with `ζ = b`, so `dz/dt > 0` (downgoing).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::medium::Medium;
use crate::symbols::{self, DampingConfig, PhasePoint, Sign};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaySample {
    pub t: f64,
    pub z: f64,
    pub x: f64,
    pub zeta: f64,
    pub xi: f64,
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    TimeSpan,
    DomainExit,
    Turning,
    Angle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    DomainExit,
    /// `ζ = 0`.
    Turning,
    /// Propagation angle reaches the configured threshold.
    Angle,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayEvent {
    pub kind: EventKind,
    pub sample: RaySample,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayOptions {
    /// End of the time span; negative values trace backwards.
    pub t_end: f64,
    /// Spacing of stored samples (absolute value is used).
    pub dt_out: f64,
    pub rtol: f64,
    pub atol: f64,
    pub stop_at_turning: bool,
    /// Stop when `ν⁻¹|ξ/τ|` reaches `sin θ`.
    pub stop_at_angle: Option<f64>,
}

impl RayOptions {
    pub fn new(t_end: f64, dt_out: f64) -> Self {
        Self { t_end, dt_out, rtol: 1e-12, atol: 1e-12, stop_at_turning: false, stop_at_angle: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RayPath {
    pub samples: Vec<RaySample>,
    pub branch: Sign,
    pub events: Vec<RayEvent>,
    pub termination: Termination,
    pub rtol: f64,
    pub atol: f64,
}

type State = [f64; 4]; // z, x, ζ, ξ

const EVENT_TOL: f64 = 1e-9;

struct Tracer<'a> {
    m: &'a Medium,
    tau: f64,
    rtol: f64,
    atol: f64,
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

impl Tracer<'_> {
    fn rhs(&self, y: &State) -> Result<State> {
        // Stages may overshoot the box near an exit; the exit event is located
        // on the inside, so the clamped extension never enters the result.
        let d = self.m.domain();
        let mp = self.m.point(y[0].clamp(d.z_min, d.z_max), y[1].clamp(d.x_min, d.x_max))?;
        let k = -1.0 / (mp.nu * mp.nu * self.tau);
        Ok([k * y[2], k * y[3], -self.tau * mp.dnu_dz / mp.nu, -self.tau * mp.dnu_dx / mp.nu])
    }

    /// One Dormand–Prince step; returns the 5th-order state and the scaled error.
    fn dp_step(&self, y: &State, h: f64) -> Result<(State, f64)> {
        debug_assert_eq!(C[0], 0.0);
        let mut k = [[0.0; 4]; 7];
        k[0] = self.rhs(y)?;
        for s in 1..7 {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(s) {
                for i in 0..4 {
                    ys[i] += h * A[s][j] * kj[i];
                }
            }
            k[s] = self.rhs(&ys)?;
        }
        let mut y5 = *y;
        let mut err = 0.0f64;
        for i in 0..4 {
            let mut e = 0.0;
            for s in 0..7 {
                y5[i] += h * B5[s] * k[s][i];
                e += h * (B5[s] - B4[s]) * k[s][i];
            }
            let sc = self.atol + self.rtol * y[i].abs().max(y5[i].abs());
            err = err.max((e / sc).abs());
        }
        Ok((y5, err))
    }

    /// Adaptive integration over a span `h_total` (either sign).
    /// Returns the end state, or `None` if the medium cannot be evaluated along the way.
    fn advance(&self, y0: &State, h_total: f64, h_guess: &mut f64) -> Result<Option<State>> {
        let mut y = *y0;
        let mut done = 0.0;
        let dir = h_total.signum();
        let mut h = h_guess.abs().min(h_total.abs()).max(1e-300) * dir;
        let tiny = 1e-14 * (1.0 + h_total.abs());
        while (h_total - done).abs() > tiny * 1e-2 {
            if (done + h - h_total) * dir > 0.0 {
                h = h_total - done;
            }
            match self.dp_step(&y, h) {
                Ok((yn, err)) if err <= 1.0 && yn.iter().all(|v| v.is_finite()) => {
                    y = yn;
                    done += h;
                    let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    *h_guess = (h * fac).abs();
                    h *= fac;
                }
                Ok((_, err)) => {
                    h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
                }
                Err(Error::Domain(_)) => {
                    h *= 0.5;
                }
                Err(e) => return Err(e),
            }
            if h.abs() < tiny {
                return Ok(None);
            }
        }
        Ok(Some(y))
    }
}

fn sample(t: f64, y: &State, tau: f64) -> RaySample {
    RaySample { t, z: y[0], x: y[1], zeta: y[2], xi: y[3], tau }
}

/// Relative distance to the domain boundary, shrunk by a tiny margin.
fn exit_fn(m: &Medium, y: &State) -> f64 {
    let d = m.domain();
    let mz = 1e-9 * (d.z_max - d.z_min);
    let mx = 1e-9 * (d.x_max - d.x_min);
    (y[0] - d.z_min - mz).min(d.z_max - mz - y[0]).min(y[1] - d.x_min - mx).min(d.x_max - mx - y[1])
}

/// The start point with `ζ = ±b`.
pub fn on_branch(m: &Medium, z: f64, x: f64, xi: f64, tau: f64, branch: Sign) -> Result<PhasePoint> {
    let b = symbols::eval_b(m, &PhasePoint::new(z, x, xi, tau))?;
    Ok(PhasePoint { zeta: Some(branch.value() * b), ..PhasePoint::new(z, x, xi, tau) })
}

/// `p = ρ⁻¹(ν²τ² − ξ² − ζ²)` and its scale `ρ⁻¹ν²τ²`.
pub fn hamiltonian(m: &Medium, s: &RaySample) -> Result<(f64, f64)> {
    let (nu, rho) = m.eval(s.z, s.x)?;
    let scale = nu * nu * s.tau * s.tau / rho;
    Ok((scale - (s.xi * s.xi + s.zeta * s.zeta) / rho, scale))
}

pub fn trace_ray(m: &Medium, start: &PhasePoint, opts: &RayOptions) -> Result<RayPath> {
    let zeta = start
        .zeta
        .ok_or_else(|| Error::config("ray start needs zeta on the characteristic set"))?;
    if start.tau == 0.0 {
        return Err(Error::domain("ray start requires tau != 0"));
    }
    if !(opts.dt_out != 0.0 && opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::config("ray options need nonzero dt_out and positive tolerances"));
    }
    let s0 = RaySample { t: 0.0, z: start.z, x: start.x, zeta, xi: start.xi, tau: start.tau };
    let (p, scale) = hamiltonian(m, &s0)?;
    if p.abs() > 1e-8 * scale {
        return Err(Error::config(format!(
            "ray start is off the characteristic set: |p| = {:e} relative",
            p.abs() / scale
        )));
    }
    let branch = if -zeta / start.tau > 0.0 { Sign::Plus } else { Sign::Minus };
    let tr = Tracer { m, tau: start.tau, rtol: opts.rtol, atol: opts.atol };
    let nu_at = |y: &State| m.eval(y[0], y[1]).map(|v| v.0);
    let angle_fn = |y: &State, th: f64| -> Result<f64> {
        Ok(th.sin() - symbols::sin_angle(nu_at(y)?, y[3], tr.tau))
    };

    let dir = opts.t_end.signum();
    let dt_out = opts.dt_out.abs() * dir;
    let mut y: State = [s0.z, s0.x, s0.zeta, s0.xi];
    let mut t = 0.0;
    let mut samples = vec![s0];
    let mut events = Vec::new();
    let mut h_guess = opts.dt_out.abs() * 0.1;
    let termination;

    'outer: loop {
        if (t - opts.t_end) * dir >= -1e-15 * opts.t_end.abs() {
            termination = Termination::TimeSpan;
            break;
        }
        let t_next = if ((t + dt_out) - opts.t_end) * dir > 0.0 { opts.t_end } else { t + dt_out };
        // adaptive substeps inside this output interval, checking events after each
        while (t_next - t) * dir > 1e-15 * (1.0 + t.abs()) {
            let rem = t_next - t;
            let h = if h_guess >= rem.abs() { rem } else { h_guess.max(1e-12) * dir };
            let mut hg = h_guess;
            let Some(yn) = tr.advance(&y, h, &mut hg)? else {
                events.push(RayEvent { kind: EventKind::DomainExit, sample: sample(t, &y, tr.tau) });
                termination = Termination::DomainExit;
                break 'outer;
            };
            h_guess = hg;
            // event functions before and after the substep
            let mut checks: Vec<(EventKind, f64, f64, bool)> = vec![
                (EventKind::DomainExit, exit_fn(m, &y), exit_fn(m, &yn), true),
                (EventKind::Turning, y[2], yn[2], opts.stop_at_turning),
            ];
            if let Some(th) = opts.stop_at_angle {
                let g1 = angle_fn(&yn, th).unwrap_or(f64::NAN);
                checks.push((EventKind::Angle, angle_fn(&y, th)?, g1, true));
            }
            let mut first: Option<(f64, EventKind, bool)> = None;
            for (kind, g0, g1, terminal) in checks {
                let crossed = (g0 > 0.0 && !(g1 > 0.0)) || (g0 < 0.0 && !(g1 < 0.0));
                if g0 == 0.0 || !crossed {
                    continue;
                }
                let g = |s: &State| -> Result<f64> {
                    match kind {
                        EventKind::DomainExit => Ok(exit_fn(m, s)),
                        EventKind::Turning => Ok(s[2]),
                        EventKind::Angle => angle_fn(s, opts.stop_at_angle.unwrap_or(0.0)),
                    }
                };
                // bisection on the fraction of the substep
                let (mut lo, mut hi) = (0.0, h);
                while (hi - lo).abs() > EVENT_TOL {
                    let mid = 0.5 * (lo + hi);
                    let mut hg2 = h_guess;
                    let gm = match tr.advance(&y, mid, &mut hg2)? {
                        Some(s) => g(&s).unwrap_or(f64::NAN),
                        None => f64::NAN,
                    };
                    if gm.is_finite() && gm.signum() == g0.signum() && gm != 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if first.map(|f| lo.abs() < f.0.abs()).unwrap_or(true) {
                    first = Some((lo, kind, terminal));
                }
                if !terminal {
                    let mut hg2 = h_guess;
                    if let Some(s) = tr.advance(&y, lo, &mut hg2)? {
                        events.push(RayEvent { kind, sample: sample(t + lo, &s, tr.tau) });
                    }
                }
            }
            if let Some((dt_ev, kind, true)) = first {
                let mut hg2 = h_guess;
                let s = tr.advance(&y, dt_ev, &mut hg2)?.unwrap_or(y);
                let ev = sample(t + dt_ev, &s, tr.tau);
                events.push(RayEvent { kind, sample: ev });
                samples.push(ev);
                termination = match kind {
                    EventKind::DomainExit => Termination::DomainExit,
                    EventKind::Turning => Termination::Turning,
                    EventKind::Angle => Termination::Angle,
                };
                break 'outer;
            }
            y = yn;
            t += h;
        }
        t = t_next;
        samples.push(sample(t, &y, tr.tau));
    }
    events.sort_by(|a, b| (a.sample.t * dir).total_cmp(&(b.sample.t * dir)));
    Ok(RayPath { samples, branch, events, termination, rtol: opts.rtol, atol: opts.atol })
}

impl RayPath {
    pub fn start(&self) -> &RaySample {
        &self.samples[0]
    }

    pub fn end(&self) -> &RaySample {
        self.samples.last().expect("ray has at least its start sample")
    }

    pub fn turned(&self) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::Turning)
    }

    /// Largest `|p|/(ρ⁻¹ν²τ²)` over the stored samples.
    pub fn max_hamiltonian_drift(&self, m: &Medium) -> Result<f64> {
        let mut worst = 0.0f64;
        for s in &self.samples {
            let (p, scale) = hamiltonian(m, s)?;
            worst = worst.max(p.abs() / scale);
        }
        Ok(worst)
    }

    /// State at time `t` by re-integrating from the nearest stored sample.
    pub fn state_at(&self, m: &Medium, t: f64) -> Result<RaySample> {
        let (t0, t1) = (self.start().t, self.end().t);
        if (t - t0) * (t - t1) > 1e-12 * (1.0 + t.abs()) {
            return Err(Error::domain(format!("t = {t} outside the traced span [{t0}, {t1}]")));
        }
        let s = self
            .samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("non-empty ray");
        if s.t == t {
            return Ok(*s);
        }
        let tr = Tracer { m, tau: s.tau, rtol: self.rtol, atol: self.atol };
        let mut hg = (t - s.t).abs();
        let y = tr
            .advance(&[s.z, s.x, s.zeta, s.xi], t - s.t, &mut hg)?
            .ok_or_else(|| Error::numeric("could not re-integrate ray state"))?;
        Ok(sample(t, &y, s.tau))
    }

    /// Whitespace-separated table `t z x zeta xi tau`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("# t z x zeta xi tau\n");
        for s in &self.samples {
            let _ = writeln!(out, "{:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e}", s.t, s.z, s.x, s.zeta, s.xi, s.tau);
        }
        out
    }

    /// Times where the path crosses depth `z`, by bisection to 1e−9.
    pub fn depth_crossings(&self, m: &Medium, z: f64) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for w in self.samples.windows(2) {
            let (g0, g1) = (w[0].z - z, w[1].z - z);
            if g0 == 0.0 {
                out.push(w[0].t);
                continue;
            }
            if g0.signum() == g1.signum() || g1 == 0.0 {
                continue;
            }
            let (mut lo, mut hi) = (w[0].t, w[1].t);
            while (hi - lo).abs() > EVENT_TOL {
                let mid = 0.5 * (lo + hi);
                let g = self.state_at(m, mid)?.z - z;
                if g.signum() == g0.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        if let Some(l) = self.samples.last() {
            if l.z == z {
                out.push(l.t);
            }
        }
        out.dedup_by(|a, b| (*a - *b).abs() < 10.0 * EVENT_TOL);
        Ok(out)
    }
}

/// A depth interval, with flags for ends clipped to the computational box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TurningInterval {
    pub z_min: f64,
    pub z_max: f64,
    pub clamped_min: bool,
    pub clamped_max: bool,
}

fn default_span(m: &Medium) -> f64 {
    let d = m.domain();
    let diag = (d.z_max - d.z_min).hypot(d.x_max - d.x_min);
    20.0 * m.bounds().nu_max * diag
}

/// Maximal depth interval around `p.z` on which the ray through `p` of the
/// given branch keeps its angle with the vertical at most `θ`.
pub fn turning_interval(m: &Medium, p: &PhasePoint, theta: f64, branch: Sign) -> Result<TurningInterval> {
    let start = on_branch(m, p.z, p.x, p.xi, p.tau, branch)?;
    let span = default_span(m);
    let d = m.domain();
    let mut ends = [(d.z_min, true), (d.z_max, true)];
    for dir in [1.0, -1.0] {
        let mut o = RayOptions::new(dir * span, span / 400.0);
        o.stop_at_angle = Some(theta);
        let ray = trace_ray(m, &start, &o)?;
        let e = ray.end();
        let z = if ray.termination == Termination::Angle { e.z } else { f64::NAN };
        // forward on the + branch moves down, backward moves up
        let goes_down = (dir > 0.0) == (branch == Sign::Plus);
        let slot = if goes_down { 1 } else { 0 };
        if z.is_finite() {
            ends[slot] = (z, false);
        }
    }
    Ok(TurningInterval { z_min: ends[0].0, z_max: ends[1].0, clamped_min: ends[0].1, clamped_max: ends[1].1 })
}

/// Membership of `(z, x, ξ, τ)` on the given branch in `J±(z0, θ)`: the point
/// lies in `I'_θ` and its ray reaches depth `z0` backwards without leaving
/// `I'_θ` (`Z_min ≤ z0` for `+`, `Z_max ≥ z0` for `−`).
pub fn in_j(m: &Medium, q: &PhasePoint, branch: Sign, z0: f64, theta: f64) -> Result<bool> {
    if !symbols::in_cone(m, q, theta)? {
        return Ok(false);
    }
    let iv = turning_interval(m, q, theta, branch)?;
    Ok(match branch {
        Sign::Plus => iv.z_min <= z0,
        Sign::Minus => iv.z_max >= z0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Attenuation {
    /// `exp(−∫ c dz')`.
    pub factor: f64,
    pub exponent: f64,
    /// The depth was not monotone between the end points; the integral was
    /// split at the turning points and accumulated with `|dz'|`.
    pub split: bool,
}

/// `exp(−∫_{z0}^{z} c(γ) dz')` along a traced ray, with composite Simpson
/// quadrature in `t` between the first crossings of `z0` and `z`.
pub fn attenuation_along_ray(m: &Medium, ray: &RayPath, d: &DampingConfig, z0: f64, z: f64) -> Result<Attenuation> {
    d.validate()?;
    let ta = *ray
        .depth_crossings(m, z0)?
        .first()
        .ok_or_else(|| Error::domain(format!("ray does not reach depth {z0}")))?;
    let tb = *ray
        .depth_crossings(m, z)?
        .iter()
        .find(|&&t| (t - ta) * (ray.end().t - ray.start().t) >= 0.0)
        .ok_or_else(|| Error::domain(format!("ray does not reach depth {z} after {z0}")))?;
    let dt_out = ray.samples.get(1).map(|s| (s.t - ray.start().t).abs()).unwrap_or(tb - ta);
    let n = (((tb - ta).abs() / dt_out).ceil() as usize * 2).clamp(64, 4096) & !1;
    let h = (tb - ta) / n as f64;
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    let mut sign_changes = false;
    let mut prev_dz: Option<f64> = None;
    for k in 0..=n {
        let s = ray.state_at(m, ta + k as f64 * h)?;
        let mp = m.point(s.z, s.x)?;
        let dz_dt = -s.zeta / (mp.nu * mp.nu * s.tau);
        if let Some(p) = prev_dz {
            if p * dz_dt < 0.0 {
                sign_changes = true;
            }
        }
        prev_dz = Some(dz_dt);
        let c = symbols::damping_at(mp.nu, s.xi, s.tau, d);
        let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * c * dz_dt;
        abs_sum += w * c * dz_dt.abs();
    }
    let integral = if sign_changes { abs_sum } else { sum.abs() } * h.abs() / 3.0;
    Ok(Attenuation { factor: (-integral).exp(), exponent: integral, split: sign_changes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{Density, Domain, Slowness};
    use crate::symbols::ConeConfig;
    use proptest::prelude::*;

    fn gradient() -> Medium {
        Medium::linear_velocity(1.0, 0.5, Domain::new(-1.5, 2.0, -4.0, 8.0).unwrap()).unwrap()
    }

    fn hom() -> Medium {
        Medium::homogeneous(1.25, 1.0, Domain::new(-2.0, 2.0, -2.0, 2.0).unwrap()).unwrap()
    }

    #[test]
    fn straight_ray_in_homogeneous_medium() {
        let m = hom();
        let p = on_branch(&m, -1.0, -0.5, 0.3, 1.0, Sign::Plus).unwrap();
        let ray = trace_ray(&m, &p, &RayOptions::new(2.0, 0.05)).unwrap();
        let zeta = p.zeta.unwrap();
        for s in &ray.samples {
            let z = -1.0 - zeta / (1.25f64.powi(2) * 1.0) * s.t;
            let x = -0.5 - 0.3 / (1.25f64.powi(2)) * s.t;
            assert!((s.z - z).abs() < 1e-10 && (s.x - x).abs() < 1e-10);
            assert_eq!(s.xi, 0.3);
        }
        assert_eq!(ray.termination, Termination::TimeSpan);
        assert!(ray.samples[1].z > ray.samples[0].z);
    }

    #[test]
    fn branch_direction() {
        let m = hom();
        for tau in [1.0, -1.0] {
            for branch in [Sign::Plus, Sign::Minus] {
                let p = on_branch(&m, 0.0, 0.0, 0.2, tau, branch).unwrap();
                let ray = trace_ray(&m, &p, &RayOptions::new(0.1, 0.01)).unwrap();
                let down = ray.samples[1].z > ray.samples[0].z;
                assert_eq!(down, -p.zeta.unwrap() / tau > 0.0);
                assert_eq!(down, branch == Sign::Plus);
                assert_eq!(ray.branch, branch);
            }
        }
    }

    #[test]
    fn off_characteristic_start_rejected() {
        let m = hom();
        let mut p = on_branch(&m, 0.0, 0.0, 0.2, 1.0, Sign::Plus).unwrap();
        p.zeta = Some(p.zeta.unwrap() * 1.01);
        assert!(matches!(trace_ray(&m, &p, &RayOptions::new(1.0, 0.1)), Err(Error::Config(_))));
    }

    #[test]
    fn turning_depth_matches_snell() {
        let m = gradient();
        let p = on_branch(&m, 0.0, 0.0, 0.8, 1.0, Sign::Plus).unwrap();
        let mut o = RayOptions::new(20.0, 0.05);
        o.stop_at_turning = true;
        let ray = trace_ray(&m, &p, &o).unwrap();
        assert_eq!(ray.termination, Termination::Turning);
        assert!((ray.end().z - 0.5).abs() < 1e-6, "{}", ray.end().z);
        assert!(ray.max_hamiltonian_drift(&m).unwrap() < 1e-8);
        for s in &ray.samples {
            assert!((s.xi - 0.8).abs() < 1e-10 && s.tau == 1.0);
        }
    }

    #[test]
    fn ray_through_turning_point_keeps_hamiltonian() {
        let m = gradient();
        let p = on_branch(&m, 0.0, 0.0, 0.8, 1.0, Sign::Plus).unwrap();
        let ray = trace_ray(&m, &p, &RayOptions::new(6.0, 0.02)).unwrap();
        assert!(ray.turned());
        assert!(ray.max_hamiltonian_drift(&m).unwrap() < 1e-8);
        let turn = ray.events.iter().find(|e| e.kind == EventKind::Turning).unwrap();
        assert!((turn.sample.z - 0.5).abs() < 1e-6);
    }

    #[test]
    fn time_reversal() {
        let m = Medium::analytic(
            Slowness::GaussianLens { v0: 1.0, amplitude: 0.1, z_c: 0.5, x_c: 0.2, width: 0.6 },
            Density::Constant { rho: 1.0 },
            Domain::new(-2.0, 3.0, -3.0, 3.0).unwrap(),
        )
        .unwrap();
        let p = on_branch(&m, -1.0, -0.3, 0.4, 2.0, Sign::Plus).unwrap();
        let fwd = trace_ray(&m, &p, &RayOptions::new(2.0, 0.05)).unwrap();
        let e = fwd.end();
        let back_start = PhasePoint { zeta: Some(e.zeta), ..PhasePoint::new(e.z, e.x, e.xi, e.tau) };
        let back = trace_ray(&m, &back_start, &RayOptions::new(-2.0, 0.05)).unwrap();
        let b = back.end();
        assert!((b.z - p.z).abs() < 1e-8 && (b.x - p.x).abs() < 1e-8);
        assert!((b.zeta - p.zeta.unwrap()).abs() < 1e-8 && (b.xi - p.xi).abs() < 1e-8);
    }

    #[test]
    fn domain_exit_is_located() {
        let m = hom();
        let p = on_branch(&m, 1.5, 0.0, 0.0, 1.0, Sign::Plus).unwrap();
        let ray = trace_ray(&m, &p, &RayOptions::new(10.0, 0.1)).unwrap();
        assert_eq!(ray.termination, Termination::DomainExit);
        assert!((ray.end().z - 2.0).abs() < 1e-6);
    }

    #[test]
    fn turning_interval_examples() {
        let m = hom();
        let th = 45f64.to_radians();
        let iv = turning_interval(&m, &PhasePoint::new(0.0, 0.0, 0.5, 1.0), th, Sign::Plus).unwrap();
        assert!(iv.clamped_min && iv.clamped_max);
        assert_eq!((iv.z_min, iv.z_max), (-2.0, 2.0));

        let g = gradient();
        let iv = turning_interval(&g, &PhasePoint::new(0.0, 0.0, 0.0, 1.0), th, Sign::Plus).unwrap();
        assert!(iv.clamped_min && iv.clamped_max);

        // Angle reaches 45° where ν = 0.8/sin 45°, i.e. z = 2(sin45°/0.8 − 1).
        let iv = turning_interval(&g, &PhasePoint::new(-1.0, 0.0, 0.8, 1.0), th, Sign::Plus).unwrap();
        let want = 2.0 * (th.sin() / 0.8 - 1.0);
        assert!((want + 0.232233).abs() < 1e-6);
        assert!((iv.z_max - want).abs() < 1e-6, "{iv:?}");
        assert!(!iv.clamped_max && iv.clamped_min);
    }

    #[test]
    fn j_membership_examples() {
        let th = 45f64.to_radians();
        let m = hom();
        assert!(in_j(&m, &PhasePoint::new(1.0, 0.3, 0.5, 1.0), Sign::Plus, -1.0, th).unwrap());

        // In v = 1 + 0.5z the angle of a + ray grows with depth; points past
        // the 45° envelope are outside the cone.
        let g = gradient();
        let z_env = 2.0 * (th.sin() / 0.8 - 1.0);
        let inside = PhasePoint::new(z_env - 1e-3, 0.0, 0.8, 1.0);
        let outside = PhasePoint::new(z_env + 1e-3, 0.0, 0.8, 1.0);
        assert!(in_j(&g, &inside, Sign::Plus, -1.0, th).unwrap());
        assert!(!in_j(&g, &outside, Sign::Plus, -1.0, th).unwrap());
        // In v = 1 − 0.3z the backward ray from z = 1 at 40° reaches 45° at
        // v = 0.7 sin45°/sin40°, i.e. z ≈ 0.766, before it gets to z0 = 0.
        let dec = Medium::linear_velocity(1.0, -0.3, Domain::new(-1.5, 2.0, -4.0, 4.0).unwrap()).unwrap();
        let nu = dec.eval(1.0, 0.0).unwrap().0;
        let q = PhasePoint::new(1.0, 0.0, 40f64.to_radians().sin() * nu, 1.0);
        let z_a = (1.0 - 0.7 * th.sin() / 40f64.to_radians().sin()) / 0.3;
        let iv = turning_interval(&dec, &q, th, Sign::Plus).unwrap();
        assert!((iv.z_min - z_a).abs() < 1e-6, "{iv:?} vs {z_a}");
        assert!(!in_j(&dec, &q, Sign::Plus, 0.0, th).unwrap());
        assert!(in_j(&dec, &q, Sign::Plus, 0.9, th).unwrap());
        // Upgoing rays traced backwards go down into the turning region.
        let up = PhasePoint::new(-1.0, 0.0, 0.8, 1.0);
        assert!(!in_j(&g, &up, Sign::Minus, 0.0, th).unwrap());
        assert!(in_j(&g, &up, Sign::Minus, -0.5, th).unwrap());
    }

    #[test]
    fn attenuation_examples() {
        let m = hom();
        let cone = ConeConfig::from_degrees(45.0, 70.0, 4.0).unwrap();
        let d = DampingConfig::new(1.0, cone, 3).unwrap();
        // inside the inner cone: factor exactly 1
        let p = on_branch(&m, -1.5, 0.0, 0.5, 1.0, Sign::Plus).unwrap();
        let ray = trace_ray(&m, &p, &RayOptions::new(5.0, 0.05)).unwrap();
        let a = attenuation_along_ray(&m, &ray, &d, -1.0, 1.0).unwrap();
        assert_eq!(a.factor, 1.0);
        // fixed angle 55°: constant c
        let xi = 1.25 * 55f64.to_radians().sin();
        let p = on_branch(&m, -1.5, 1.5, xi, 1.0, Sign::Plus).unwrap();
        let ray = trace_ray(&m, &p, &RayOptions::new(5.0, 0.05)).unwrap();
        let a = attenuation_along_ray(&m, &ray, &d, -1.0, 0.5).unwrap();
        let c = symbols::eval_damping(&m, &PhasePoint::new(0.0, 0.0, xi, 1.0), &d).unwrap();
        assert!((a.exponent - 1.5 * c).abs() < 1e-9 * c, "{} vs {}", a.exponent, 1.5 * c);
        assert!(!a.split);
        // frequency scaling
        let p4 = on_branch(&m, -1.5, 1.5, 4.0 * xi, 4.0, Sign::Plus).unwrap();
        let ray4 = trace_ray(&m, &p4, &RayOptions::new(20.0, 0.2)).unwrap();
        let a4 = attenuation_along_ray(&m, &ray4, &d, -1.0, 0.5).unwrap();
        assert!((a4.exponent - 4.0 * a.exponent).abs() < 1e-8 * a4.exponent);
    }

    #[test]
    fn table_export() {
        let m = hom();
        let p = on_branch(&m, 0.0, 0.0, 0.1, 1.0, Sign::Plus).unwrap();
        let ray = trace_ray(&m, &p, &RayOptions::new(0.2, 0.1)).unwrap();
        let t = ray.to_table();
        assert_eq!(t.lines().count(), 1 + ray.samples.len());
        assert_eq!(t.lines().nth(1).unwrap().split_whitespace().count(), 6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn drift_and_group_velocity(
            z in -1.0f64..0.5, x in -1.0f64..1.0, frac in -0.9f64..0.9,
            tau in prop_oneof![-4.0f64..-0.5, 0.5f64..4.0],
        ) {
            let m = Medium::analytic(
                Slowness::GaussianLens { v0: 1.0, amplitude: -0.1, z_c: 0.8, x_c: 0.0, width: 0.5 },
                Density::LinearZ { rho0: 1.0, drho_dz: 0.1 },
                Domain::new(-2.0, 3.0, -3.0, 3.0).unwrap(),
            ).unwrap();
            let nu = m.eval(z, x).unwrap().0;
            let p = on_branch(&m, z, x, frac * nu * tau.abs(), tau, Sign::Plus).unwrap();
            let ray = trace_ray(&m, &p, &RayOptions::new(1.0, 0.05)).unwrap();
            prop_assert!(ray.max_hamiltonian_drift(&m).unwrap() <= 1e-8);
            let h = 1e-6;
            let s = ray.state_at(&m, h).unwrap();
            let dz = (s.z - z) / h;
            let want = -p.zeta.unwrap() / (nu * nu * tau);
            prop_assert!((dz - want).abs() <= 1e-4 * (1.0 + want.abs()));
        }

        #[test]
        fn j_is_monotone_in_theta(z in -0.5f64..0.4, frac in 0.2f64..0.69) {
            let g = gradient();
            let nu = g.eval(z, 0.0).unwrap().0;
            let q = PhasePoint::new(z, 0.0, frac * nu, 1.0);
            let t1 = 45f64.to_radians();
            let t2 = 70f64.to_radians();
            if in_j(&g, &q, Sign::Plus, -1.0, t1).unwrap() {
                prop_assert!(in_j(&g, &q, Sign::Plus, -1.0, t2).unwrap());
            }
        }
    }
}
