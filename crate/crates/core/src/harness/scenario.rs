//! Scenario files: one config per experiment kind, run end to end with
//! metrics, artifacts and a checksummed manifest written to the output
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{
    ConfigText, FullWaveSection, Kind, MediumFile, MediumSpec, OneWaySection, ScenarioSection, SourceSection,
};
use super::experiments::{self as ex, Artifact, Outcome};
use super::report::Report;
use crate::error::{Error, Result};
use crate::medium::{Density, Domain, Medium, Slowness};

macro_rules! scenario_doc {
    ($name:ident { $($field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Debug, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct $name {
            #[allow(dead_code)]
            scenario: ScenarioSection,
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

scenario_doc!(DispersionDoc {
    dispersion: ex::DispersionParams,
    attenuation: ex::AttenuationParams,
    fullwave: ex::FdCheckParams,
});

scenario_doc!(LensDoc {
    fullwave: FullWaveSection,
    source: SourceSection,
    oneway: OneWaySection,
    receivers: ex::ReceiverParams,
    unitarity: ex::UnitarityParams,
});

scenario_doc!(TurningDoc {
    fullwave: FullWaveSection,
    turning_beam: SourceSection,
    fidelity_beam: SourceSection,
    oneway: OneWaySection,
    window: ex::TurnedWindowParams,
    receivers: ex::ReceiverParams,
    ray_attenuation: ex::RayAttenuationParams,
});

scenario_doc!(SymbolDoc { symbols: ex::SymbolParams });

scenario_doc!(RayDoc { rays: ex::RayParams });

#[derive(Deserialize)]
struct Head {
    scenario: ScenarioSection,
}

/// Read the `[scenario]` section only.
pub fn scenario_header(src: &ConfigText) -> Result<ScenarioSection> {
    Ok(src.parse::<Head>()?.scenario)
}

fn cone_at(src: &ConfigText, section: &str, t1: f64, t2: f64, c: f64) -> Result<crate::symbols::ConeConfig> {
    super::config::cone(src, section, t1, t2, c)
}

/// Run the experiments of a scenario without writing anything.
pub fn evaluate(src: &ConfigText) -> Result<(ScenarioSection, Outcome)> {
    let head = scenario_header(src)?;
    let seed = head.seed;
    let out = match head.kind {
        Kind::HomogeneousDispersion => {
            let d: DispersionDoc = src.parse()?;
            let m = d.medium(src)?;
            let p = &d.dispersion;
            cone_at(src, "dispersion", p.theta1, p.theta2, p.c_zeta)?;
            ex::merge([
                ex::dispersion(&m, p).map_err(|e| src.at("dispersion", "n", e))?,
                ex::homogeneous_attenuation(&m, p, &d.attenuation).map_err(|e| src.at("attenuation", "angle", e))?,
                ex::fd_checks(&m, &d.fullwave).map_err(|e| src.at("fullwave", "n", e))?,
            ])
        }
        Kind::LensTransmission => {
            let d: LensDoc = src.parse()?;
            let m = d.medium(src)?;
            let cone = d.oneway.cone(src)?;
            let inputs = ex::LensInputs {
                fullwave: d.fullwave.build(&m, src, "fullwave")?,
                source: d.source.build(src, "source")?,
                oneway: &d.oneway,
                receivers: &d.receivers,
            };
            ex::merge([
                ex::unitarity(&m, cone, &d.unitarity, seed).map_err(|e| src.at("unitarity", "n", e))?,
                ex::lens_transmission(&m, &inputs, src)?,
            ])
        }
        Kind::GradientTurning => {
            let d: TurningDoc = src.parse()?;
            let m = d.medium(src)?;
            let damping = d
                .oneway
                .damping(src)?
                .ok_or_else(|| src.invalid("oneway", "eta", "the turning scenario needs damping (eta)"))?;
            let inputs = ex::TurningInputs {
                fullwave: d.fullwave.build(&m, src, "fullwave")?,
                turning_beam: d.turning_beam.build(src, "turning_beam")?,
                fidelity_beam: d.fidelity_beam.build(src, "fidelity_beam")?,
                oneway: &d.oneway,
                window: &d.window,
                receivers: &d.receivers,
            };
            ex::merge([
                ex::ray_attenuation(&m, &damping, &d.ray_attenuation).map_err(|e| src.at("ray_attenuation", "z0", e))?,
                ex::gradient_turning(&m, &inputs, src)?,
            ])
        }
        Kind::SymbolVerify => {
            let d: SymbolDoc = src.parse()?;
            let m = d.medium(src)?;
            let p = &d.symbols;
            cone_at(src, "symbols", p.theta1, p.theta2, p.c_zeta)?;
            ex::symbol_checks(&m, p, seed).map_err(|e| src.at("symbols", "n_points", e))?
        }
        Kind::RayAtlas => {
            let d: RayDoc = src.parse()?;
            let m = d.medium(src)?;
            ex::ray_atlas(&m, &d.rays).map_err(|e| src.at("rays", "z0", e))?
        }
    };
    Ok((head, out))
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    name: &'a str,
    kind: &'a str,
    seed: u64,
    passed: bool,
    #[serde(flatten)]
    report: &'a Report,
}

#[derive(Serialize)]
struct ManifestEntry {
    name: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    kind: &'a str,
    seed: u64,
    file: Vec<ManifestEntry>,
}

/// Result of a scenario run that wrote its outputs.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub scenario: ScenarioSection,
    pub dir: PathBuf,
    pub report: Report,
    /// Written files relative to `dir`, sorted, manifest excluded.
    pub files: Vec<String>,
}

impl ScenarioRun {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

fn write(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<String>) -> Result<()> {
    fs::write(dir.join(name), bytes)?;
    files.push(name.to_string());
    Ok(())
}

/// Write metrics, artifacts and the manifest into `dir`.
pub fn write_outputs(dir: &Path, name: &str, kind: &str, seed: u64, out: &Outcome) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for a in &out.artifacts {
        match a {
            Artifact::Grid { stem, grid } => {
                grid.write(dir.join(stem))?;
                files.push(format!("{stem}.bin"));
                files.push(format!("{stem}.hdr"));
            }
            Artifact::Text { name, text } => write(dir, name, text.as_bytes(), &mut files)?,
        }
    }
    let metrics = MetricsFile {
        name,
        kind,
        seed,
        passed: out.report.passed(),
        report: &out.report,
    };
    let text = toml::to_string(&metrics).map_err(|e| Error::Format(format!("cannot serialize metrics: {e}")))?;
    write(dir, "metrics.toml", text.as_bytes(), &mut files)?;
    files.sort();
    files.dedup();

    let mut entries = Vec::new();
    for f in &files {
        let bytes = fs::read(dir.join(f))?;
        entries.push(ManifestEntry { name: f.clone(), bytes: bytes.len() as u64, sha256: hex(&Sha256::digest(&bytes)) });
    }
    let manifest = Manifest { name, kind, seed, file: entries };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(format!("cannot serialize manifest: {e}")))?;
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(files)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Run a scenario and write its outputs to `out_dir`, or to the config's
/// `output` directory when `None`.
pub fn run_scenario_to(path: impl AsRef<Path>, out_dir: Option<&Path>) -> Result<ScenarioRun> {
    let src = ConfigText::read(path)?;
    let (head, out) = evaluate(&src)?;
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => src.resolve(&head.output),
    };
    let files = write_outputs(&dir, &head.name, head.kind.name(), head.seed, &out)?;
    Ok(ScenarioRun { scenario: head, dir, report: out.report, files })
}

pub fn run_scenario(path: impl AsRef<Path>) -> Result<ScenarioRun> {
    run_scenario_to(path, None)
}
