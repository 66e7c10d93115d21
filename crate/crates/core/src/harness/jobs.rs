//! Single-stage jobs behind the command line: full-wave simulation, one-way
//! continuation of a recorded trace, ray fans, symbol checks, and section
//! comparison.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::config::{ConfigText, FullWaveSection, MediumFile, MediumSpec, OneWaySection, SourceSection};
use super::experiments::{self as ex, Artifact, Outcome};
use super::report::Report;
use super::scenario::write_outputs;
use crate::error::{Error, Result};
use crate::fullwave::run_fullwave;
use crate::gridfile::GridFile;
use crate::medium::{Density, Domain, Medium, Slowness};
use crate::metrics::{compare_fields, compare_sections, cube_section, Metrics, Window};
use crate::oneway::{propagate, reconstruct_u, FieldCube, PlaneTrace};
use crate::rays::{on_branch, trace_ray, RayOptions, Termination};
use crate::symbols::Sign;

/// `[job]`: where to write outputs. Without `output` only the report is
/// produced.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSection {
    #[serde(default = "default_name")]
    pub name: String,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "job".into()
}

macro_rules! job_doc {
    ($name:ident { $($field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Debug, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct $name {
            #[serde(default)]
            job: JobSection,
            medium: Option<MediumFile>,
            slowness: Option<Slowness>,
            density: Option<Density>,
            domain: Option<Domain>,
            $($field: $ty),*
        }

        impl $name {
            fn medium(&self, src: &ConfigText) -> Result<Medium> {
                MediumSpec {
                    medium: self.medium.clone(),
                    slowness: self.slowness.clone(),
                    density: self.density.clone(),
                    domain: self.domain,
                }
                .build(src)
            }
        }
    };
}

/// `[recording]` of a full-wave job.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingSection {
    #[serde(default)]
    pub depths: Vec<f64>,
    /// Point receivers as `[z, x]` pairs.
    #[serde(default)]
    pub receivers: Vec<[f64; 2]>,
}

job_doc!(FullWaveJob { fullwave: FullWaveSection, source: SourceSection, recording: RecordingSection });

/// `[input]` of a one-way job: a recorded plane trace.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub trace: PathBuf,
    /// Store every k-th depth step; 0 stores `z0` and `z1` only.
    #[serde(default)]
    pub store_every: usize,
}

job_doc!(OneWayJob { input: InputSection, oneway: OneWaySection });

/// `[rays]` of a ray job: a fan of launch angles from one point.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayFanSection {
    pub z0: f64,
    pub x0: f64,
    #[serde(default = "one")]
    pub tau: f64,
    /// Launch angles from the vertical in degrees, positive toward `+x`.
    pub angles: Vec<f64>,
    pub t_end: f64,
    pub dt_out: f64,
    #[serde(default)]
    pub stop_at_turning: bool,
}

fn one() -> f64 {
    1.0
}

job_doc!(RayJob { rays: RayFanSection });

job_doc!(SymbolJob { symbols: ex::SymbolParams });

/// A finished job: its report and, when an output directory was configured,
/// where the files went.
#[derive(Clone, Debug)]
pub struct JobRun {
    pub report: Report,
    pub dir: Option<PathBuf>,
    pub files: Vec<String>,
}

fn finish(src: &ConfigText, job: &JobSection, kind: &str, out: Outcome) -> Result<JobRun> {
    match &job.output {
        Some(d) => {
            let dir = src.resolve(d);
            let files = write_outputs(&dir, &job.name, kind, job.seed, &out)?;
            Ok(JobRun { report: out.report, dir: Some(dir), files })
        }
        None => Ok(JobRun { report: out.report, dir: None, files: Vec::new() }),
    }
}

pub fn simulate_fullwave(path: impl AsRef<Path>) -> Result<JobRun> {
    let src = ConfigText::read(path)?;
    let d: FullWaveJob = src.parse()?;
    let m = d.medium(&src)?;
    let mut cfg = d.fullwave.build(&m, &src, "fullwave")?;
    cfg.sources = vec![d.source.build(&src, "source")?];
    cfg.record_depths = d.recording.depths.clone();
    cfg.receivers = d.recording.receivers.iter().map(|r| (r[0], r[1])).collect();
    cfg.validate(&m).map_err(|e| src.at("fullwave", "dt", e))?;
    let res = run_fullwave(&cfg, &m)?;

    let mut out = Outcome::default();
    out.report.metric("dt", cfg.dt);
    out.report.metric("nt", cfg.nt as f64);
    for (k, tr) in res.traces.iter().enumerate() {
        out.artifacts.push(Artifact::Grid { stem: format!("trace_{k}"), grid: tr.to_grid_file()? });
    }
    if !res.receivers.is_empty() {
        let mut text = String::from("# t");
        for (z, x) in &cfg.receivers {
            text.push_str(&format!(" u({z},{x})"));
        }
        text.push('\n');
        for n in 0..res.receivers[0].len() {
            text.push_str(&format!("{:.9e}", n as f64 * cfg.dt));
            for r in &res.receivers {
                text.push_str(&format!(" {:.9e}", r[n]));
            }
            text.push('\n');
        }
        out.artifacts.push(Artifact::Text { name: "receivers.txt".into(), text });
    }
    finish(&src, &d.job, "simulate-fullwave", out)
}

pub fn simulate_oneway(path: impl AsRef<Path>) -> Result<JobRun> {
    let src = ConfigText::read(path)?;
    let d: OneWayJob = src.parse()?;
    let m = d.medium(&src)?;
    let g = GridFile::read(src.resolve(&d.input.trace)).map_err(|e| src.at("input", "trace", e))?;
    let tr = PlaneTrace::from_grid_file(&g).map_err(|e| src.at("input", "trace", e))?;
    let (count, left) = d.oneway.embedding_for(tr.grid.n, &src)?;
    let tr = d.oneway.embed_trace(&tr, &src)?;
    let mut cfg = d.oneway.build(tr.grid, tr.dt, tr.nt(), &src)?;
    cfg.store_every = d.input.store_every;
    let nt = tr.nt();
    let cube = propagate(&tr.padded(d.oneway.n_fft), &cfg, &m)?;
    let u = reconstruct_u(&cube, &cfg, &m)?;
    let last = u.depths.len() - 1;
    // back on the (decimated) aperture of the input trace
    let section = cube_section(&u, last)?.truncated(nt).window(left, count)?;

    let mut out = Outcome::default();
    out.report.metric("steps", cfg.n_steps() as f64);
    out.report.metric("taus", cfg.taus.len() as f64);
    out.report.warnings = cube.warnings.clone();
    out.artifacts.push(Artifact::Grid { stem: "field".into(), grid: u.to_grid_file()? });
    out.artifacts.push(Artifact::Grid { stem: "section_z1".into(), grid: section.to_grid_file()? });
    finish(&src, &d.job, "simulate-oneway", out)
}

pub fn trace_rays(path: impl AsRef<Path>) -> Result<JobRun> {
    let src = ConfigText::read(path)?;
    let d: RayJob = src.parse()?;
    let m = d.medium(&src)?;
    let p = &d.rays;
    let nu = m.eval(p.z0, p.x0).map_err(|e| src.at("rays", "z0", e))?.0;
    let mut out = Outcome::default();
    let mut drift = 0.0f64;
    let mut turned = 0;
    for (k, &a) in p.angles.iter().enumerate() {
        let xi = -nu * a.to_radians().sin() * p.tau;
        let start = on_branch(&m, p.z0, p.x0, xi, p.tau, Sign::Plus).map_err(|e| src.at("rays", "angles", e))?;
        let mut opts = RayOptions::new(p.t_end, p.dt_out);
        opts.stop_at_turning = p.stop_at_turning;
        let ray = trace_ray(&m, &start, &opts)?;
        drift = drift.max(ray.max_hamiltonian_drift(&m)?);
        if ray.turned() || ray.termination == Termination::Turning {
            turned += 1;
        }
        out.artifacts.push(Artifact::Text { name: format!("ray_{k:03}.txt"), text: ray.to_table() });
    }
    out.report.metric("rays", p.angles.len() as f64);
    out.report.metric("turned", turned as f64);
    out.report.at_most("hamiltonian_drift", drift, ex::limits::HAMILTONIAN_DRIFT);
    finish(&src, &d.job, "trace-rays", out)
}

pub fn verify_symbols(path: impl AsRef<Path>) -> Result<JobRun> {
    let src = ConfigText::read(path)?;
    let d: SymbolJob = src.parse()?;
    let m = d.medium(&src)?;
    let p = &d.symbols;
    super::config::cone(&src, "symbols", p.theta1, p.theta2, p.c_zeta)?;
    let out = ex::symbol_checks(&m, p, d.job.seed).map_err(|e| src.at("symbols", "n_points", e))?;
    finish(&src, &d.job, "verify-symbols", out)
}

/// `[window]` of a comparison; absent bounds are unbounded.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub min_snr: Option<f64>,
    /// Expected arrival interval `[t_lo, t_hi]`, the same for every trace.
    pub arrival: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowDoc {
    #[serde(default)]
    window: WindowSection,
}

impl WindowSection {
    pub fn window(&self, n_traces: usize) -> Window {
        let mut w = Window::all();
        w.t_min = self.t_min.unwrap_or(w.t_min);
        w.t_max = self.t_max.unwrap_or(w.t_max);
        w.x_min = self.x_min.unwrap_or(w.x_min);
        w.x_max = self.x_max.unwrap_or(w.x_max);
        w.min_snr = self.min_snr.unwrap_or(w.min_snr);
        w.arrivals = self.arrival.map(|a| vec![(a[0], a[1]); n_traces]);
        w
    }
}

fn summarize(r: &mut Report, prefix: &str, m: &Metrics) {
    r.metric(&format!("{prefix}misfit"), m.misfit);
    r.metric(&format!("{prefix}energy_a"), m.energy_a);
    r.metric(&format!("{prefix}energy_b"), m.energy_b);
    r.metric(&format!("{prefix}max_abs_time_shift"), m.max_abs_shift());
    r.metric(&format!("{prefix}max_amplitude_ratio_error"), m.max_ratio_error());
    r.metric(&format!("{prefix}valid_traces"), m.n_valid() as f64);
    if let Some(f) = m.residual_fraction {
        r.metric(&format!("{prefix}residual_fraction"), f);
    }
}

enum Section {
    Trace(PlaneTrace),
    Cube(FieldCube),
}

fn load_section(path: &Path) -> Result<Section> {
    let g = GridFile::read(path)?;
    if g.is_complex() {
        Ok(Section::Cube(FieldCube::from_grid_file(&g)?))
    } else {
        Ok(Section::Trace(PlaneTrace::from_grid_file(&g)?))
    }
}

/// Compare two plane traces or two field cubes inside the window of
/// `window_cfg` (a file with an optional `[window]` section).
pub fn compare(a: impl AsRef<Path>, b: impl AsRef<Path>, window_cfg: impl AsRef<Path>) -> Result<Report> {
    let src = ConfigText::read(window_cfg)?;
    let w: WindowDoc = src.parse()?;
    let mut r = Report::default();
    match (load_section(a.as_ref())?, load_section(b.as_ref())?) {
        (Section::Trace(a), Section::Trace(b)) => {
            let m = compare_sections(&a, &b, &w.window.window(a.grid.n))?;
            summarize(&mut r, "", &m);
        }
        (Section::Cube(a), Section::Cube(b)) => {
            for (iz, m) in compare_fields(&a, &b, &w.window.window(a.grid.n))?.iter().enumerate() {
                summarize(&mut r, &format!("depth_{iz}_"), m);
            }
        }
        _ => return Err(Error::Config("cannot compare a plane trace with a field cube".into())),
    }
    Ok(r)
}
