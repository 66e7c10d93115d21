//! Flat sectioned configuration files (`[section]` then `key = value`).
//!
//! Every section maps onto a struct that rejects unknown keys, so typos are
//! reported with the line and column of the offending entry. Semantic errors
//! found after parsing are located by [`ConfigText::locate`]. Angles are given in
//! degrees and converted on use.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fullwave::{FdGrid, FullWaveConfig, Source, SourceShape, Sponge, Wavelet};
use crate::medium::{Density, Domain, Medium, Slowness};
use crate::oneway::{OneWayConfig, PlaneTrace, SolverKind, Stepper};
use crate::psdo::LateralGrid;
use crate::symbols::{ConeConfig, DampingConfig, Normalization};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    HomogeneousDispersion,
    GradientTurning,
    LensTransmission,
    SymbolVerify,
    RayAtlas,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::HomogeneousDispersion => "homogeneous-dispersion",
            Kind::GradientTurning => "gradient-turning",
            Kind::LensTransmission => "lens-transmission",
            Kind::SymbolVerify => "symbol-verify",
            Kind::RayAtlas => "ray-atlas",
        }
    }
}

/// Config text together with its origin, for diagnostics.
#[derive(Clone, Debug)]
pub struct ConfigText {
    pub path: PathBuf,
    pub text: String,
}

impl ConfigText {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("{}: cannot read config: {e}", path.display())))?;
        Ok(Self { path, text })
    }

    pub fn from_text(path: impl Into<PathBuf>, text: impl Into<String>) -> Self {
        Self { path: path.into(), text: text.into() }
    }

    pub fn parse<T: DeserializeOwned>(&self) -> Result<T> {
        toml::from_str(&self.text).map_err(|e| Error::Config(format!("{}: {e}", self.path.display())))
    }

    /// Directory against which relative paths in the config are resolved.
    pub fn base_dir(&self) -> PathBuf {
        self.path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir().join(p)
        }
    }

    /// `path:line: [section] key: ` prefix for a semantic error, falling back
    /// to the section header (or the file) when the key is absent.
    pub fn locate(&self, section: &str, key: &str) -> String {
        let mut current = String::new();
        let mut header = None;
        for (i, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = name.trim().to_string();
                if current == section && header.is_none() {
                    header = Some(i + 1);
                }
                continue;
            }
            if current == section {
                if let Some((k, _)) = line.split_once('=') {
                    if k.trim() == key {
                        return format!("{}:{}: [{section}] {key}", self.path.display(), i + 1);
                    }
                }
            }
        }
        match header {
            Some(l) => format!("{}:{}: [{section}] {key}", self.path.display(), l),
            None => format!("{}: [{section}] {key}", self.path.display()),
        }
    }

    /// Wrap an error from validating `[section] key` with its location.
    pub fn at(&self, section: &str, key: &str, e: Error) -> Error {
        let loc = self.locate(section, key);
        match e {
            Error::Config(m) => Error::Config(format!("{loc}: {m}")),
            Error::Domain(m) => Error::Config(format!("{loc}: {m}")),
            other => other,
        }
    }

    pub fn invalid(&self, section: &str, key: &str, msg: impl std::fmt::Display) -> Error {
        Error::Config(format!("{}: {msg}", self.locate(section, key)))
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    pub kind: Kind,
    /// Artifact directory, relative to the config file.
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

/// `[medium] grid = "file"` for gridded media.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumFile {
    pub grid: PathBuf,
}

/// The medium sections: either `[medium]` pointing at a grid file, or
/// `[slowness]`, `[density]` and `[domain]` for a closed-form preset.
#[derive(Clone, Debug, Default)]
pub struct MediumSpec {
    pub medium: Option<MediumFile>,
    pub slowness: Option<Slowness>,
    pub density: Option<Density>,
    pub domain: Option<Domain>,
}

impl MediumSpec {
    pub fn build(&self, src: &ConfigText) -> Result<Medium> {
        match (&self.medium, &self.slowness) {
            (Some(f), None) => {
                if self.density.is_some() || self.domain.is_some() {
                    return Err(src.invalid("medium", "grid", "a gridded medium takes no [density] or [domain]"));
                }
                Medium::load(src.resolve(&f.grid)).map_err(|e| src.at("medium", "grid", e))
            }
            (None, Some(s)) => {
                let rho = self.density.clone().unwrap_or(Density::Constant { rho: 1.0 });
                let d = self.domain.ok_or_else(|| src.invalid("domain", "z_min", "missing [domain] section"))?;
                let d = Domain::new(d.z_min, d.z_max, d.x_min, d.x_max).map_err(|e| src.at("domain", "z_min", e))?;
                Medium::analytic(s.clone(), rho, d).map_err(|e| src.at("slowness", "kind", e))
            }
            (Some(_), Some(_)) => Err(src.invalid("medium", "grid", "give either [medium] grid or [slowness], not both")),
            (None, None) => Err(src.invalid("slowness", "kind", "missing medium: add [slowness] or [medium] grid")),
        }
    }
}

/// Finite-difference grid and time axis.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullWaveSection {
    pub nz: usize,
    pub nx: usize,
    pub z_origin: f64,
    pub x_origin: f64,
    pub h: f64,
    /// Defaults to 95% of the stability limit.
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default = "default_sponge_width")]
    pub sponge_width: usize,
    #[serde(default = "default_sponge_strength")]
    pub sponge_strength: f64,
}

fn default_sponge_width() -> usize {
    Sponge::default().width
}

fn default_sponge_strength() -> f64 {
    Sponge::default().strength
}

impl FullWaveSection {
    pub fn build(&self, m: &Medium, src: &ConfigText, section: &str) -> Result<FullWaveConfig> {
        let g = FdGrid::new(self.nz, self.nx, self.z_origin, self.x_origin, self.h, self.h)
            .map_err(|e| src.at(section, "nz", e))?;
        let mut c = FullWaveConfig::new(g, 1.0, 1);
        c.dt = match self.dt {
            Some(dt) => dt,
            None => 0.95 * c.max_dt(m),
        };
        if !(self.t_end > 0.0) {
            return Err(src.invalid(section, "t_end", "t_end must be positive"));
        }
        c.nt = (self.t_end / c.dt).round() as usize;
        c.sponge = Sponge { width: self.sponge_width, strength: self.sponge_strength };
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Point,
    Gaussian,
    Beam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveletKind {
    Ricker,
    Gaussian,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub shape: ShapeKind,
    pub z: f64,
    pub x: f64,
    /// Spatial width (gaussian and beam shapes).
    pub width: Option<f64>,
    /// Beam angle from the vertical in degrees, positive toward `+x`.
    pub angle: Option<f64>,
    pub wavelet: WaveletKind,
    /// Peak frequency of the Ricker wavelet.
    pub freq: Option<f64>,
    /// Standard deviation of the Gaussian wavelet.
    pub sigma: Option<f64>,
    pub delay: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl SourceSection {
    pub fn build(&self, src: &ConfigText, section: &str) -> Result<Source> {
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| src.invalid(section, key, format!("`{key}` is required here")));
        let shape = match self.shape {
            ShapeKind::Point => SourceShape::Point { z: self.z, x: self.x },
            ShapeKind::Gaussian => SourceShape::Gaussian { z: self.z, x: self.x, width: need(self.width, "width")? },
            ShapeKind::Beam => SourceShape::Beam {
                z: self.z,
                x: self.x,
                angle: need(self.angle, "angle")?.to_radians(),
                width: need(self.width, "width")?,
            },
        };
        let wavelet = match self.wavelet {
            WaveletKind::Ricker => Wavelet::Ricker { freq: need(self.freq, "freq")?, delay: self.delay },
            WaveletKind::Gaussian => Wavelet::Gaussian { sigma: need(self.sigma, "sigma")?, delay: self.delay },
        };
        Ok(Source { shape, wavelet, amplitude: self.amplitude })
    }
}

/// One-way stage fed by a full-wave trace.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneWaySection {
    pub z0: f64,
    pub z1: f64,
    pub dz: f64,
    /// Lateral size of the periodic one-way grid.
    pub n: usize,
    /// Lateral decimation of the full-wave grid.
    #[serde(default = "one_usize")]
    pub stride: usize,
    pub n_fft: usize,
    pub n_tau: usize,
    /// Index of the first DFT bin in the band.
    #[serde(default = "one_usize")]
    pub tau_first: usize,
    pub theta1: f64,
    pub theta2: f64,
    pub c_zeta: f64,
    /// Damping strength; no damping when absent.
    pub eta: Option<f64>,
    #[serde(default = "default_stepper")]
    pub stepper: Stepper,
    #[serde(default = "default_solver")]
    pub solver: SolverKind,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default = "one")]
    pub band_factor: f64,
    #[serde(default = "yes")]
    pub strict_unitary: bool,
    #[serde(default)]
    pub monotone_damping: bool,
}

fn one_usize() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_stepper() -> Stepper {
    Stepper::MatrixExponential
}

fn default_solver() -> SolverKind {
    SolverKind::Auto
}

fn default_normalization() -> Normalization {
    Normalization::Unitary
}

pub fn cone(src: &ConfigText, section: &str, theta1: f64, theta2: f64, c_zeta: f64) -> Result<ConeConfig> {
    ConeConfig::from_degrees(theta1, theta2, c_zeta).map_err(|e| src.at(section, "theta1", e))
}

impl OneWaySection {
    pub fn cone(&self, src: &ConfigText) -> Result<ConeConfig> {
        cone(src, "oneway", self.theta1, self.theta2, self.c_zeta)
    }

    pub fn damping(&self, src: &ConfigText) -> Result<Option<DampingConfig>> {
        self.eta
            .map(|eta| DampingConfig::new(eta, self.cone(src)?, 3).map_err(|e| src.at("oneway", "eta", e)))
            .transpose()
    }

    /// Decimated node count and left padding that centres the full-wave
    /// aperture in the one-way grid.
    pub fn embedding(&self, fd: &FullWaveConfig, src: &ConfigText) -> Result<(usize, usize)> {
        self.embedding_for(fd.grid.nx, src)
    }

    pub fn embedding_for(&self, nx: usize, src: &ConfigText) -> Result<(usize, usize)> {
        if self.stride == 0 {
            return Err(src.invalid("oneway", "stride", "stride must be positive"));
        }
        let m = nx.div_ceil(self.stride);
        if m > self.n {
            return Err(src.invalid(
                "oneway",
                "n",
                format!("one-way grid of {} nodes cannot hold the {m} decimated full-wave nodes", self.n),
            ));
        }
        Ok((m, (self.n - m) / 2))
    }

    /// Map a recorded trace onto the one-way grid: decimate, then zero-extend.
    /// Nodes inside the full-wave aperture coincide with full-wave nodes.
    pub fn trace_to_grid(&self, tr: &PlaneTrace, fd: &FullWaveConfig, src: &ConfigText) -> Result<PlaneTrace> {
        let (_, left) = self.embedding(fd, src)?;
        tr.decimated(self.stride)?.embedded(self.n, left)
    }

    /// Same as [`Self::trace_to_grid`] for a trace of any lateral size.
    pub fn embed_trace(&self, tr: &PlaneTrace, src: &ConfigText) -> Result<PlaneTrace> {
        let (_, left) = self.embedding_for(tr.grid.n, src)?;
        tr.decimated(self.stride)?.embedded(self.n, left)
    }

    pub fn build(&self, grid: LateralGrid, dt: f64, nt: usize, src: &ConfigText) -> Result<OneWayConfig> {
        if self.n_fft < nt {
            return Err(src.invalid(
                "oneway",
                "n_fft",
                format!("n_fft = {} is shorter than the {nt} recorded samples", self.n_fft),
            ));
        }
        if self.n_tau == 0 || self.tau_first == 0 || self.tau_first + self.n_tau > self.n_fft / 2 {
            return Err(src.invalid("oneway", "n_tau", "tau band must lie strictly between 0 and the Nyquist bin"));
        }
        let dtau = 2.0 * std::f64::consts::PI / (self.n_fft as f64 * dt);
        let taus = (self.tau_first..self.tau_first + self.n_tau).map(|k| k as f64 * dtau).collect();
        let mut c = OneWayConfig::new(grid, taus, self.z0, self.z1, self.dz, self.cone(src)?);
        c.damping = self.damping(src)?;
        c.stepper = self.stepper;
        c.solver = self.solver;
        c.normalization = self.normalization;
        c.band_factor = self.band_factor;
        c.strict_unitary = self.strict_unitary;
        c.monotone_damping = self.monotone_damping;
        c.validate().map_err(|e| src.at("oneway", "dz", e))?;
        Ok(c)
    }
}
