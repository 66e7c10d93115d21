//! Comparison metrics between time-domain sections.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::oneway::{FieldCube, PlaneTrace};
use crate::psdo;

/// Envelope `|s + iH s|` of a real trace via the FFT analytic signal.
pub fn envelope(trace: &[f64]) -> Vec<f64> {
    let n = trace.len();
    if n == 0 {
        return Vec::new();
    }
    let mut v: Vec<C64> = trace.iter().map(|&x| C64::from(x)).collect();
    psdo::fft_forward(&mut v);
    for (k, c) in v.iter_mut().enumerate() {
        if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
            continue;
        }
        *c *= if k < n.div_ceil(2) { 2.0 } else { 0.0 };
    }
    psdo::fft_inverse(&mut v);
    v.iter().map(|c| c.norm() / n as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pick {
    pub time: f64,
    pub amplitude: f64,
    /// Envelope peak over the median envelope.
    pub snr: f64,
    pub valid: bool,
}

pub const DEFAULT_MIN_SNR: f64 = 8.0;

/// Envelope-peak arrival time with sub-sample parabolic interpolation
/// (on the log-envelope, exact for Gaussian envelopes).
pub fn pick_wavefront(trace: &[f64], t0: f64, dt: f64, min_snr: f64) -> Pick {
    let env = envelope(trace);
    let invalid = Pick { time: f64::NAN, amplitude: 0.0, snr: 0.0, valid: false };
    let Some((k, &peak)) = env.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) else {
        return invalid;
    };
    if !(peak > 0.0) {
        return invalid;
    }
    let mut sorted = env.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let snr = if median > 0.0 { peak / median } else { f64::INFINITY };
    let mut offset = 0.0;
    let mut amp = peak;
    if k > 0 && k + 1 < env.len() && env[k - 1] > 0.0 && env[k + 1] > 0.0 {
        let (a, b, c) = (env[k - 1].ln(), peak.ln(), env[k + 1].ln());
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            offset = 0.5 * (a - c) / den;
            amp = (b - 0.25 * (a - c) * offset).exp();
        }
    }
    Pick { time: t0 + (k as f64 + offset) * dt, amplitude: amp, snr, valid: snr >= min_snr }
}

/// Picks for every lateral position of a section.
pub fn pick_section(s: &PlaneTrace, min_snr: f64) -> Vec<Pick> {
    (0..s.grid.n).map(|j| pick_wavefront(&column(s, j), s.t0, s.dt, min_snr)).collect()
}

fn column(s: &PlaneTrace, j: usize) -> Vec<f64> {
    (0..s.nt()).map(|it| s.at(it, j)).collect()
}

/// Space-time window of a comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub t_min: f64,
    pub t_max: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub min_snr: f64,
    /// Per-trace predicted arrival intervals; energy of `B` outside them is
    /// reported as residual.
    pub arrivals: Option<Vec<(f64, f64)>>,
}

impl Window {
    pub fn all() -> Self {
        Self {
            t_min: f64::NEG_INFINITY,
            t_max: f64::INFINITY,
            x_min: f64::NEG_INFINITY,
            x_max: f64::INFINITY,
            min_snr: DEFAULT_MIN_SNR,
            arrivals: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceMetric {
    pub x: f64,
    pub pick_a: Pick,
    pub pick_b: Pick,
    /// `t_B − t_A` when both picks are valid.
    pub time_shift: Option<f64>,
    /// Peak envelope ratio `B / A` when both picks are valid.
    pub amplitude_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// `‖B − A‖ / ‖A‖` over the window.
    pub misfit: f64,
    pub energy_a: f64,
    pub energy_b: f64,
    pub traces: Vec<TraceMetric>,
    /// Fraction of `B`'s windowed energy outside the arrival intervals.
    pub residual_fraction: Option<f64>,
}

impl Metrics {
    pub fn max_abs_shift(&self) -> f64 {
        self.traces.iter().filter_map(|t| t.time_shift).fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn max_ratio_error(&self) -> f64 {
        self.traces.iter().filter_map(|t| t.amplitude_ratio).fold(0.0, |m, r| m.max((r - 1.0).abs()))
    }

    pub fn n_valid(&self) -> usize {
        self.traces.iter().filter(|t| t.time_shift.is_some()).count()
    }
}

fn commensurate(a: &PlaneTrace, b: &PlaneTrace) -> Result<()> {
    let same = a.grid.n == b.grid.n
        && a.nt() == b.nt()
        && (a.grid.dx - b.grid.dx).abs() <= 1e-12 * a.grid.dx
        && (a.grid.x0 - b.grid.x0).abs() <= 1e-9 * (1.0 + a.grid.x0.abs())
        && (a.dt - b.dt).abs() <= 1e-12 * a.dt
        && (a.t0 - b.t0).abs() <= 1e-9 * (1.0 + a.t0.abs());
    if same {
        Ok(())
    } else {
        Err(Error::config("sections are not on commensurate grids"))
    }
}

/// Compare reference section `a` with candidate `b` inside `w`.
pub fn compare_sections(a: &PlaneTrace, b: &PlaneTrace, w: &Window) -> Result<Metrics> {
    commensurate(a, b)?;
    let n = a.grid.n;
    if let Some(arr) = &w.arrivals {
        if arr.len() != n {
            return Err(Error::config("arrival windows must list one interval per trace"));
        }
    }
    let in_t = |it: usize| {
        let t = a.t0 + it as f64 * a.dt;
        t >= w.t_min && t <= w.t_max
    };
    let (mut ea, mut eb, mut ed, mut outside) = (0.0, 0.0, 0.0, 0.0);
    let mut traces = Vec::new();
    for j in 0..n {
        let x = a.grid.x(j);
        if x < w.x_min || x > w.x_max {
            continue;
        }
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        let mut t_first = None;
        for it in (0..a.nt()).filter(|&it| in_t(it)) {
            let (va, vb) = (a.at(it, j), b.at(it, j));
            ea += va * va;
            eb += vb * vb;
            ed += (va - vb).powi(2);
            if let Some(arr) = &w.arrivals {
                let t = a.t0 + it as f64 * a.dt;
                if t < arr[j].0 || t > arr[j].1 {
                    outside += vb * vb;
                }
            }
            t_first.get_or_insert(a.t0 + it as f64 * a.dt);
            ca.push(va);
            cb.push(vb);
        }
        let t_first = t_first.unwrap_or(a.t0);
        let pa = pick_wavefront(&ca, t_first, a.dt, w.min_snr);
        let pb = pick_wavefront(&cb, t_first, a.dt, w.min_snr);
        let both = pa.valid && pb.valid;
        traces.push(TraceMetric {
            x,
            pick_a: pa,
            pick_b: pb,
            time_shift: both.then_some(pb.time - pa.time),
            amplitude_ratio: both.then(|| pb.amplitude / pa.amplitude),
        });
    }
    let scale = a.dt * a.grid.dx;
    Ok(Metrics {
        misfit: if ea > 0.0 { (ed / ea).sqrt() } else if ed == 0.0 { 0.0 } else { f64::INFINITY },
        energy_a: ea * scale,
        energy_b: eb * scale,
        traces,
        residual_fraction: w.arrivals.as_ref().map(|_| if eb > 0.0 { outside / eb } else { 0.0 }),
    })
}

/// Time-domain section of a cube at stored depth index `iz`.
pub fn cube_section(c: &FieldCube, iz: usize) -> Result<PlaneTrace> {
    let ax = c.time.ok_or_else(|| Error::config("cube has no time axis"))?;
    PlaneTrace::new(c.depths[iz], c.grid, ax.t0, ax.dt, c.time_domain(iz)?)
}

/// `Σ s²` over samples with `|t − t_c| ≤ half_t` and `|x − x_c| ≤ half_x`.
pub fn window_energy(s: &PlaneTrace, t_c: f64, half_t: f64, x_c: f64, half_x: f64) -> f64 {
    let mut e = 0.0;
    for it in 0..s.nt() {
        if (s.t0 + it as f64 * s.dt - t_c).abs() > half_t {
            continue;
        }
        for j in 0..s.grid.n {
            if (s.grid.x(j) - x_c).abs() <= half_x {
                e += s.at(it, j).powi(2);
            }
        }
    }
    e
}

/// Compare two cubes depth by depth.
pub fn compare_fields(a: &FieldCube, b: &FieldCube, w: &Window) -> Result<Vec<Metrics>> {
    if a.depths.len() != b.depths.len()
        || a.depths.iter().zip(&b.depths).any(|(x, y)| (x - y).abs() > 1e-9 * (1.0 + x.abs()))
    {
        return Err(Error::config("cubes store different depths"));
    }
    (0..a.depths.len()).map(|iz| compare_sections(&cube_section(a, iz)?, &cube_section(b, iz)?, w)).collect()
}
