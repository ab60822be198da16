//! On-disk artifacts: solution archives, report directories and their
//! manifests. Everything is text (TOML, JSON, CSV) and byte-reproducible.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::USD_PER_TC;
use crate::nash::EquilibriumSolution;
use crate::params::BASE_YEAR;
use crate::scenario::{ScenarioConfig, SCHEMA_VERSION};

pub const CONFIG_FILE: &str = "config.toml";
pub const SOLUTION_FILE: &str = "solution.json";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const GLOBAL_FILE: &str = "global.csv";
pub const MULTIPLIERS_FILE: &str = "multipliers.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: checksum mismatch")]
    Checksum { path: PathBuf },
}

fn io(path: &Path, e: impl std::fmt::Display) -> ArchiveError {
    ArchiveError::Io { path: path.to_path_buf(), reason: e.to_string() }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `SOURCE_DATE_EPOCH` when set, so reruns can be byte-identical; otherwise
/// the literal `unset`.
pub fn timestamp() -> String {
    std::env::var("SOURCE_DATE_EPOCH").unwrap_or_else(|_| "unset".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub converged: bool,
    pub iterations: usize,
    pub max_dprice: f64,
    pub max_demission: f64,
    pub max_imbalance: f64,
}

impl ConvergenceSummary {
    pub fn of(eq: &EquilibriumSolution) -> Self {
        let last = eq.history.last();
        Self {
            converged: eq.converged,
            iterations: eq.iterations,
            max_dprice: last.map_or(0.0, |h| h.max_dprice),
            max_demission: last.map_or(0.0, |h| h.max_demission),
            max_imbalance: last.map_or(0.0, |h| h.max_imbalance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub code_version: String,
    /// SHA-256 of the primary input (config or dataset listing).
    pub input_sha256: String,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSummary>,
    pub files: Vec<FileEntry>,
}

/// Writes `files` into `dir` followed by a manifest listing them.
pub fn write_with_manifest(
    dir: &Path,
    command: &str,
    input_sha256: String,
    convergence: Option<ConvergenceSummary>,
    files: &[(String, Vec<u8>)],
) -> Result<RunManifest, ArchiveError> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut entries = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
        entries.push(FileEntry { name: name.clone(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
    }
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        command: command.into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        input_sha256,
        timestamp: timestamp(),
        convergence,
        files: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest is serializable") + "\n";
    std::fs::write(&path, text).map_err(|e| io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, ArchiveError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| ArchiveError::Format { path: path.clone(), reason: e.to_string() })?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(ArchiveError::Format { path, reason: format!("unsupported schema_version {}", m.schema_version) });
    }
    Ok(m)
}

/// Reads a file listed in the manifest, checking its checksum.
fn read_checked(dir: &Path, manifest: &RunManifest, name: &str) -> Result<Vec<u8>, ArchiveError> {
    let path = dir.join(name);
    let entry = manifest
        .files
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| ArchiveError::Format { path: path.clone(), reason: "not listed in manifest".into() })?;
    let bytes = std::fs::read(&path).map_err(|e| io(&path, e))?;
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(ArchiveError::Checksum { path });
    }
    Ok(bytes)
}

#[derive(Serialize, Deserialize)]
struct SolutionDocument {
    schema_version: u32,
    solution: EquilibriumSolution,
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn year(t: usize) -> String {
    (BASE_YEAR + t as i32).to_string()
}

/// Contents of a solution archive, in write order.
pub fn solution_files(config: &ScenarioConfig, eq: &EquilibriumSolution) -> Vec<(String, Vec<u8>)> {
    let h = eq.horizon();
    let doc = SolutionDocument { schema_version: SCHEMA_VERSION, solution: eq.clone() };
    let json = serde_json::to_vec(&doc).expect("solution is serializable");

    let trajectories = csv_bytes(
        &["region", "year", "mu", "permit_purchase", "investment", "consumption", "capital", "emissions", "gross_output", "net_output", "abatement_cost"],
        eq.regions.iter().flat_map(|r| {
            let tr = &r.solution.trajectory;
            (0..h).map(move |t| {
                vec![
                    r.name.clone(),
                    year(t),
                    num(tr.mu[t]),
                    num(tr.permit_purchase[t]),
                    num(tr.investment[t]),
                    num(tr.consumption[t]),
                    num(tr.capital[t]),
                    num(tr.emissions[t]),
                    num(tr.gross_output[t]),
                    num(tr.net_output[t]),
                    num(tr.abatement_cost[t]),
                ]
            })
        }),
    );

    // Without trading there is no permit market, so no price columns.
    let ets = eq.scenario.ets_enabled;
    let mut header = vec!["year"];
    if ets {
        header.extend(["price_usd_per_tc", "imbalance_gtc"]);
    }
    header.extend(["cum_emissions_gtc", "temperature_c"]);
    let global = csv_bytes(
        &header,
        (0..h).map(|t| {
            let mut row = vec![year(t)];
            if ets {
                row.extend([num(USD_PER_TC * eq.prices[t]), num(eq.imbalance[t])]);
            }
            row.extend([num(eq.cum_emissions[t]), num(eq.temperature[t])]);
            row
        }),
    );

    let multipliers = csv_bytes(
        &["region", "year", "cap", "capital", "cum_emissions"],
        eq.regions.iter().flat_map(|r| {
            let m = &r.solution.multipliers;
            (0..h).map(move |t| vec![r.name.clone(), year(t), num(m.cap[t]), num(m.capital[t]), num(m.cum_emissions[t])])
        }),
    );

    let convergence = csv_bytes(
        &["iteration", "max_dprice", "max_demission", "max_imbalance"],
        eq.history.iter().map(|h| vec![h.iteration.to_string(), num(h.max_dprice), num(h.max_demission), num(h.max_imbalance)]),
    );

    vec![
        (CONFIG_FILE.into(), config.to_toml().into_bytes()),
        (SOLUTION_FILE.into(), json),
        (TRAJECTORIES_FILE.into(), trajectories),
        (GLOBAL_FILE.into(), global),
        (MULTIPLIERS_FILE.into(), multipliers),
        (CONVERGENCE_FILE.into(), convergence),
    ]
}

pub fn write_solution(dir: &Path, config: &ScenarioConfig, eq: &EquilibriumSolution) -> Result<RunManifest, ArchiveError> {
    let files = solution_files(config, eq);
    let hash = sha256_hex(&files[0].1);
    write_with_manifest(dir, "solve", hash, Some(ConvergenceSummary::of(eq)), &files)
}

/// Loads a solution archive, verifying every file it needs.
pub fn read_solution(dir: &Path) -> Result<(ScenarioConfig, EquilibriumSolution), ArchiveError> {
    let manifest = read_manifest(dir)?;
    let cfg_path = dir.join(CONFIG_FILE);
    let cfg_text = String::from_utf8(read_checked(dir, &manifest, CONFIG_FILE)?).map_err(|e| io(&cfg_path, e))?;
    let config = ScenarioConfig::from_toml(&cfg_text).map_err(|e| ArchiveError::Format { path: cfg_path, reason: e.to_string() })?;
    let sol_path = dir.join(SOLUTION_FILE);
    let doc: SolutionDocument = serde_json::from_slice(&read_checked(dir, &manifest, SOLUTION_FILE)?)
        .map_err(|e| ArchiveError::Format { path: sol_path.clone(), reason: e.to_string() })?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(ArchiveError::Format { path: sol_path, reason: format!("unsupported schema_version {}", doc.schema_version) });
    }
    Ok((config, doc.solution))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_lists_every_file_and_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let files = vec![("a.csv".to_string(), b"x,y\n1,2\n".to_vec()), ("b.txt".to_string(), b"hello".to_vec())];
        let m = write_with_manifest(dir.path(), "test", sha256_hex(b"in"), None, &files).unwrap();
        assert_eq!(m.files.len(), 2);
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
        assert_eq!(read_checked(dir.path(), &m, "b.txt").unwrap(), b"hello");
        std::fs::write(dir.path().join("b.txt"), "hellO").unwrap();
        assert!(matches!(read_checked(dir.path(), &m, "b.txt"), Err(ArchiveError::Checksum { .. })));
        assert!(read_checked(dir.path(), &m, "c.txt").is_err());
    }
}
