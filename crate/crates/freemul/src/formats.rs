//! JSON and CSV formats: measures, spike specifications, solution records, density
//! tables and error records.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use freemul_core::{
    Complex64, ConvolutionResult, MeasureKind, SpectralMeasure, SubordinationSolution,
};

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `{"kind":"atomic","atoms":[[x,w],...]}` or `{"kind":"density","grid":[...],"values":[...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureSpec {
    Atomic { atoms: Vec<[f64; 2]> },
    Density { grid: Vec<f64>, values: Vec<f64> },
}

impl MeasureSpec {
    pub fn to_measure(&self) -> freemul_core::Result<SpectralMeasure> {
        match self {
            MeasureSpec::Atomic { atoms } => {
                SpectralMeasure::atomic(atoms.iter().map(|[x, w]| (*x, *w)).collect::<Vec<_>>())
            }
            MeasureSpec::Density { grid, values } => SpectralMeasure::density(grid.clone(), values.clone()),
        }
    }

    pub fn from_measure(mu: &SpectralMeasure) -> Self {
        match mu.kind() {
            MeasureKind::Atomic => MeasureSpec::Atomic {
                atoms: mu.atoms().iter().map(|(x, w)| [*x, *w]).collect(),
            },
            MeasureKind::GriddedDensity => MeasureSpec::Density {
                grid: mu.grid().to_vec(),
                values: mu.values().to_vec(),
            },
        }
    }
}

/// `{"d_a":[...],"d_b":[...],"n":N}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeSpec {
    #[serde(default)]
    pub d_a: Vec<f64>,
    #[serde(default)]
    pub d_b: Vec<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub z: [f64; 2],
    pub omega_a: [f64; 2],
    pub omega_b: [f64; 2],
    pub residual: f64,
    pub iterations: usize,
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

impl From<&SubordinationSolution> for SolutionRecord {
    fn from(s: &SubordinationSolution) -> Self {
        Self {
            z: pair(s.z),
            omega_a: pair(s.omega_a),
            omega_b: pair(s.omega_b),
            residual: s.residual,
            iterations: s.iterations,
        }
    }
}

/// Library version and configuration hash carried by every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self { version: VERSION.to_string(), config_hash: config_hash.into() }
    }
}

/// Hex SHA-256 of the JSON serialisation of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configuration serialises");
    let digest = Sha256::digest(&bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Machine-readable record of a failed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error: String,
    pub message: String,
    pub exit_code: i32,
    #[serde(flatten)]
    pub provenance: Provenance,
}

impl ErrorRecord {
    pub fn new(err: &Error, provenance: Provenance) -> Self {
        Self {
            error: err.kind().to_string(),
            message: err.to_string(),
            exit_code: err.exit_code(),
            provenance,
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })
}

pub fn read_measure(path: &Path) -> Result<SpectralMeasure> {
    let spec: MeasureSpec = read_json(path)?;
    spec.to_measure().map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialises");
    s.push('\n');
    s
}

/// CSV text: header, rows, then one `#`-prefixed line holding the JSON metadata block.
pub fn csv_table<T: Serialize>(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>, meta: &T) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.push_str("# ");
    out.push_str(&serde_json::to_string(meta).expect("metadata serialises"));
    out.push('\n');
    out
}

pub const DENSITY_HEADER: [&str; 4] = ["x", "rho", "re_m", "im_m"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMeta {
    pub e_minus: f64,
    pub e_plus: f64,
    pub eval_eta: f64,
    pub mass: f64,
    pub failed_points: usize,
    #[serde(flatten)]
    pub provenance: Provenance,
}

pub fn density_csv(result: &ConvolutionResult, provenance: Provenance) -> String {
    let meta = DensityMeta {
        e_minus: result.e_minus,
        e_plus: result.e_plus,
        eval_eta: result.eval_eta,
        mass: result.mass(),
        failed_points: result.status.len() - result.status.iter().filter(|s| **s == freemul_core::convolution::PointStatus::Converged).count(),
        provenance,
    };
    let rows = result
        .grid
        .iter()
        .zip(&result.density)
        .zip(&result.stieltjes_row)
        .map(|((x, r), m)| vec![*x, *r, m.re, m.im]);
    csv_table(&DENSITY_HEADER, rows, &meta)
}

/// Data rows of a CSV produced by [`csv_table`], skipping the header and metadata lines.
pub fn parse_csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

/// Metadata block of a CSV produced by [`csv_table`].
pub fn parse_csv_meta(text: &str) -> Option<serde_json::Value> {
    text.lines()
        .rev()
        .find_map(|l| l.strip_prefix("# "))
        .and_then(|m| serde_json::from_str(m).ok())
}
