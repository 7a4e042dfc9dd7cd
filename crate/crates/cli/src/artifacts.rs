//! Artifact serialization: JSON documents, full-precision CSV tables, and
//! the manifest that lists every artifact with its SHA-256 checksum.
//! Nothing here embeds timestamps or absolute paths, so a rerun with the
//! same seed reproduces every file byte for byte.

use crate::error::{CliError, CliResult};
use dprisk_core::diagnostics::DensityGrid;
use dprisk_core::market::ReturnPanel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// File name of the manifest.
pub const MANIFEST_NAME: &str = "manifest.json";

// ---------------------------------------------------------------------------
// Generic writers
// ---------------------------------------------------------------------------

/// Serializes a value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads a JSON document.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Input(format!("cannot read {}: {e}", path.display()))
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// SHA-256 of a byte slice, hex-encoded.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Replaces every character outside `[A-Za-z0-9_-]` so an asset name can
/// appear in a file name.
pub fn sanitize_asset(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

/// Writes a return panel as CSV: header of asset names, one row per date.
/// Values print in the shortest representation that round-trips.
pub fn write_panel_csv(path: &Path, panel: &ReturnPanel) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(&panel.assets.join(","));
    out.push('\n');
    for i in 0..panel.n_rows {
        let row: Vec<String> = panel.row(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a panel written by [`write_panel_csv`].
pub fn read_panel_csv(path: &Path) -> CliResult<ReturnPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let assets: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: bad header: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != assets.len() {
            return Err(CliError::Input(format!(
                "{}: row with {} fields, expected {}",
                path.display(),
                record.len(),
                assets.len()
            )));
        }
        for cell in record.iter() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                CliError::Input(format!("{}: bad number {cell:?}", path.display()))
            })?;
            values.push(v);
        }
    }
    ReturnPanel::from_rows(assets, values).map_err(CliError::from)
}

/// Writes stacked density grids as CSV with columns `x,density,source`.
pub fn write_density_csv(path: &Path, grids: &[&DensityGrid]) -> CliResult<()> {
    let mut out = String::from("x,density,source\n");
    for grid in grids {
        let label = grid.source.label();
        for (x, d) in grid.xs.iter().zip(&grid.densities) {
            out.push_str(&format!("{x},{d},{label}\n"));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes the two-dimensional projection scores as CSV with columns
/// `set,pc1,pc2` (`set` is `observed` or `simulated`).
pub fn write_pca_csv(
    path: &Path,
    observed: &[[f64; 2]],
    simulated: &[[f64; 2]],
) -> CliResult<()> {
    let mut out = String::from("set,pc1,pc2\n");
    for (label, rows) in [("observed", observed), ("simulated", simulated)] {
        for row in rows {
            out.push_str(&format!("{label},{},{}\n", row[0], row[1]));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// JSON documents for the coupling and the weights
// ---------------------------------------------------------------------------

/// Kendall-tau concordance matrix artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauDoc {
    pub assets: Vec<String>,
    /// Square matrix as nested rows.
    pub values: Vec<Vec<f64>>,
}

/// Copula correlation artifact: the positive-definite matrix actually used
/// for simulation, its degrees of freedom, and whether the raw sine-mapped
/// matrix needed an eigenvalue repair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaDoc {
    pub assets: Vec<String>,
    /// Degrees of freedom; `null` stands for the Gaussian limit, since
    /// JSON cannot hold an infinite number.
    pub df: Option<f64>,
    pub repaired: bool,
    /// Square matrix as nested rows.
    pub values: Vec<Vec<f64>>,
}

impl SigmaDoc {
    /// Degrees of freedom with the JSON `null` mapped back to infinity.
    pub fn df_value(&self) -> f64 {
        self.df.unwrap_or(f64::INFINITY)
    }

    /// The JSON representation of a degrees-of-freedom value.
    pub fn df_field(df: f64) -> Option<f64> {
        df.is_finite().then_some(df)
    }
}

/// Portfolio weights artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsDoc {
    pub assets: Vec<String>,
    pub weights: Vec<f64>,
    /// How the weights were chosen: `equal`, `explicit`, `min-variance`,
    /// `risk-aversion`, or `target-return`.
    pub objective: String,
    /// Set for mean-variance objectives.
    #[serde(default)]
    pub long_only: Option<bool>,
    /// Whether the sample covariance needed an eigenvalue repair.
    #[serde(default)]
    pub repaired: Option<bool>,
}

/// Flattens a nalgebra matrix into nested rows for JSON.
pub fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Rebuilds a square matrix from nested rows.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> CliResult<nalgebra::DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::input("matrix rows must form a nonempty square"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(nalgebra::DMatrix::from_row_slice(n, n, &flat))
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// Row counts reported per asset, mirroring the ingestion bookkeeping.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestCounts {
    /// Price rows kept after drops.
    pub price_rows: usize,
    /// Log-returns formed (one fewer than the price rows).
    pub returns: usize,
    /// Rows dropped for an empty mapped cell (per file, repeated for each
    /// asset the file carries).
    pub dropped_missing: usize,
    /// Rows dropped for a malformed cell (within the 5% budget).
    pub dropped_unparseable: usize,
}

/// Mean-square deviations of the model densities from the kernel estimate.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MsdStats {
    /// Mixture predictive vs kernel density estimate.
    pub rpm_vs_kde: f64,
    /// Single-normal benchmark vs kernel density estimate.
    pub bs_vs_kde: f64,
}

/// Highest-density intervals of the posterior mixture moments (90%).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HpdStats {
    pub mean: [f64; 2],
    pub sd: [f64; 2],
}

/// Explained-variance summary of the two-dimensional projection.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PcaStats {
    pub observed_evr: [f64; 2],
    pub simulated_evr: [f64; 2],
    pub reduced_rank: bool,
}

/// Derived statistics recorded alongside the artifacts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Stats {
    #[serde(default)]
    pub msd: BTreeMap<String, MsdStats>,
    #[serde(default)]
    pub hpd: BTreeMap<String, HpdStats>,
    #[serde(default)]
    pub pca: Option<PcaStats>,
    /// Whether the copula correlation needed an eigenvalue repair.
    #[serde(default)]
    pub copula_repaired: Option<bool>,
}

/// One manifest row: an artifact file, its size, and its checksum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// The run manifest: outcome flags, per-asset bookkeeping, derived
/// statistics, and a checksummed list of every artifact in the output
/// directory. Reflects the most recent command that wrote it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    /// `success`, `non_convergence`, or `failed`.
    pub status: String,
    /// Stage that aborted the run, when `status` is `failed`.
    pub failed_stage: Option<String>,
    /// Root seed of the run.
    pub seed: u64,
    /// Assets in panel order.
    pub assets: Vec<String>,
    /// Per-asset ingestion counts.
    #[serde(default)]
    pub ingest: BTreeMap<String, IngestCounts>,
    /// Per-asset sampler convergence flags.
    #[serde(default)]
    pub converged: BTreeMap<String, bool>,
    #[serde(default)]
    pub stats: Stats,
    /// Every artifact in the output directory (manifest excluded), sorted
    /// by name.
    #[serde(default)]
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    /// A fresh manifest for a run with this seed.
    pub fn new(seed: u64) -> Self {
        Self {
            status: "success".into(),
            failed_stage: None,
            seed,
            assets: Vec::new(),
            ingest: BTreeMap::new(),
            converged: BTreeMap::new(),
            stats: Stats::default(),
            artifacts: Vec::new(),
        }
    }

    /// Loads the manifest from `out_dir`, or starts a fresh one.
    pub fn load_or_new(out_dir: &Path, seed: u64) -> Self {
        let path = out_dir.join(MANIFEST_NAME);
        if path.exists() {
            if let Ok(m) = read_json::<Manifest>(&path) {
                return m;
            }
        }
        Self::new(seed)
    }

    /// Rescans the output directory (files only, manifest excluded),
    /// records size and checksum per artifact, and writes the manifest.
    pub fn save(&mut self, out_dir: &Path) -> CliResult<PathBuf> {
        let mut entries = Vec::new();
        if out_dir.exists() {
            for item in fs::read_dir(out_dir)? {
                let item = item?;
                if !item.file_type()?.is_file() {
                    continue;
                }
                let name = item.file_name().to_string_lossy().into_owned();
                if name == MANIFEST_NAME {
                    continue;
                }
                let bytes = fs::read(item.path())?;
                entries.push(ArtifactEntry {
                    name,
                    bytes: bytes.len() as u64,
                    sha256: sha256_hex(&bytes),
                });
            }
        }
        entries.sort_by(|a, b| a.name.cmp(&b.name));
        self.artifacts = entries;
        let path = out_dir.join(MANIFEST_NAME);
        write_json(&path, self)?;
        Ok(path)
    }
}
