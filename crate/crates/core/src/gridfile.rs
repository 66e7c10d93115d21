//! The common grid file format: a little-endian `f64` payload in row-major
//! order (`<stem>.bin`, complex values interleaved as `re, im`) plus a text
//! sidecar (`<stem>.hdr`):
//!
//! ```text
//! format_version = 1
//! value_type = complex
//! payload = cube.bin
//! dim = z 64 0 0.01 depth
//! dim = x 256 -1.28 0.01 lateral
//! attr.tau_band = 0.5,1.0
//! ```
//!
//! `dim` lines list `name size origin spacing unit`, slowest axis first.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Dim {
    pub name: String,
    pub size: usize,
    pub origin: f64,
    pub spacing: f64,
    pub unit: String,
}

impl Dim {
    pub fn new(name: &str, size: usize, origin: f64, spacing: f64, unit: &str) -> Self {
        Self {
            name: name.to_string(),
            size,
            origin,
            spacing,
            unit: unit.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFile {
    pub dims: Vec<Dim>,
    complex: bool,
    /// Flattened payload; complex grids hold `2·Π size` values.
    pub data: Vec<f64>,
    pub attrs: BTreeMap<String, String>,
}

fn paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("hdr"), path.with_extension("bin"))
}

impl GridFile {
    pub fn real(dims: Vec<Dim>, data: Vec<f64>) -> Result<Self> {
        Self::build(dims, false, data)
    }

    pub fn complex(dims: Vec<Dim>, data: &[num_complex::Complex64]) -> Result<Self> {
        let flat = data.iter().flat_map(|c| [c.re, c.im]).collect();
        Self::build(dims, true, flat)
    }

    fn build(dims: Vec<Dim>, complex: bool, data: Vec<f64>) -> Result<Self> {
        let g = Self { dims, complex, data, attrs: BTreeMap::new() };
        g.validate()?;
        Ok(g)
    }

    pub fn with_attr(mut self, key: &str, value: impl ToString) -> Self {
        self.attrs.insert(key.to_string(), value.to_string());
        self
    }

    pub fn is_complex(&self) -> bool {
        self.complex
    }

    pub fn len(&self) -> usize {
        self.dims.iter().map(|d| d.size).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn complex_values(&self) -> Vec<num_complex::Complex64> {
        if self.complex {
            self.data
                .chunks_exact(2)
                .map(|c| num_complex::Complex64::new(c[0], c[1]))
                .collect()
        } else {
            self.data.iter().map(|&v| v.into()).collect()
        }
    }

    fn validate(&self) -> Result<()> {
        let expected = self.len() * if self.complex { 2 } else { 1 };
        if self.data.len() != expected {
            return Err(Error::Format(format!(
                "payload has {} values, declared sizes need {expected}",
                self.data.len()
            )));
        }
        for d in &self.dims {
            if d.name.is_empty() || d.name.contains(char::is_whitespace) {
                return Err(Error::Format(format!("bad dimension name {:?}", d.name)));
            }
        }
        Ok(())
    }

    /// Write `<path>.hdr` and `<path>.bin`; returns both paths.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        self.validate()?;
        let (hdr, bin) = paths(path.as_ref());
        let mut bytes = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&bin, bytes)?;
        let mut text = String::new();
        text.push_str(&format!("format_version = {FORMAT_VERSION}\n"));
        text.push_str(&format!(
            "value_type = {}\n",
            if self.complex { "complex" } else { "real" }
        ));
        let payload_name = bin.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        text.push_str(&format!("payload = {payload_name}\n"));
        for d in &self.dims {
            let unit = if d.unit.is_empty() { "-" } else { &d.unit };
            text.push_str(&format!(
                "dim = {} {} {:e} {:e} {}\n",
                d.name, d.size, d.origin, d.spacing, unit
            ));
        }
        for (k, v) in &self.attrs {
            text.push_str(&format!("attr.{k} = {v}\n"));
        }
        fs::write(&hdr, text)?;
        Ok((hdr, bin))
    }

    /// Read a grid given its stem, sidecar or payload path.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let (hdr, _) = paths(path.as_ref());
        let text = fs::read_to_string(&hdr)?;
        let mut dims = Vec::new();
        let mut complex = None;
        let mut version = None;
        let mut payload = None;
        let mut attrs = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| Error::Format(format!("{}:{}: {m}", hdr.display(), lineno + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "format_version" => {
                    version = Some(value.parse::<u32>().map_err(|_| err("bad format_version"))?)
                }
                "value_type" => {
                    complex = Some(match value {
                        "real" => false,
                        "complex" => true,
                        _ => return Err(err("value_type must be real or complex")),
                    })
                }
                "payload" => payload = Some(value.to_string()),
                "dim" => {
                    let f: Vec<&str> = value.split_whitespace().collect();
                    if f.len() != 5 {
                        return Err(err("dim needs: name size origin spacing unit"));
                    }
                    dims.push(Dim {
                        name: f[0].to_string(),
                        size: f[1].parse().map_err(|_| err("bad dim size"))?,
                        origin: f[2].parse().map_err(|_| err("bad dim origin"))?,
                        spacing: f[3].parse().map_err(|_| err("bad dim spacing"))?,
                        unit: if f[4] == "-" { String::new() } else { f[4].to_string() },
                    });
                }
                k if k.starts_with("attr.") => {
                    attrs.insert(k["attr.".len()..].to_string(), value.to_string());
                }
                _ => return Err(err(&format!("unknown key {key:?}"))),
            }
        }
        match version {
            Some(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::Format(format!("unsupported format_version {v}"))),
            None => return Err(Error::Format("missing format_version".into())),
        }
        let complex = complex.ok_or_else(|| Error::Format("missing value_type".into()))?;
        let bin = match payload {
            Some(p) => hdr.with_file_name(p),
            None => hdr.with_extension("bin"),
        };
        let bytes = fs::read(&bin)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Format("payload length is not a multiple of 8".into()));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let mut g = Self::build(dims, complex, data)?;
        g.attrs = attrs;
        Ok(g)
    }
}
