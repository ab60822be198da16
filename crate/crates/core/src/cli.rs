//! Command-line surface: calibrate, solve, diagnose, compare.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::archive::{self, sha256_hex, write_with_manifest, ArchiveError};
use crate::calibration::dataset::CalibrationDataset;
use crate::calibration::fixture::bundled_dir;
use crate::calibration::pipeline::calibrate;
use crate::calibration::CalibError;
use crate::diagnostics::{self, adjusted_cap_comparison, DiagError};
use crate::nash::{solve_nash, EquilibriumSolution, NashError};
use crate::region::RegionError;
use crate::scenario::{ScenarioConfig, ScenarioError};

pub const EXIT_OK: i32 = 0;
/// Failures not covered by the codes below, e.g. unwritable output.
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "ETS_NASH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ets-nash", version, about = "Multi-region climate-economy model with an emission trading system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit parameters, caps and carbon intensities from a calibration dataset.
    Calibrate {
        /// Dataset directory; defaults to the bundled synthetic dataset.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the Nash equilibrium of a scenario and write a solution archive.
    Solve(SolveArgs),
    /// Policy report for one archive; with a second, no-trade archive also the
    /// welfare comparison under adjusted caps.
    Diagnose {
        /// Archive solved with trading.
        archive: PathBuf,
        /// Archive of the same scenario solved without trading.
        no_ets_archive: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Year-aligned comparison tables across archives.
    Compare {
        #[arg(required = true, num_args = 2..)]
        archives: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Scenario config (TOML); defaults to the calibrated baseline.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to the config's output_dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Nash price and emission tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub no_ets: bool,
    /// baseline, netzeroYYYY, unbounded or custom:<file>
    #[arg(long)]
    pub cap_scenario: Option<String>,
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl std::fmt::Display) -> Self {
        Self { code, message: message.to_string() }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Self::new(EXIT_VALIDATION, e)
    }
}

impl From<CalibError> for Failure {
    fn from(e: CalibError) -> Self {
        let code = match e {
            CalibError::NonConvergence(_) => EXIT_NOT_CONVERGED,
            _ => EXIT_VALIDATION,
        };
        Self::new(code, e)
    }
}

impl From<ArchiveError> for Failure {
    fn from(e: ArchiveError) -> Self {
        Self::new(EXIT_VALIDATION, e)
    }
}

fn nash_code(e: &NashError) -> i32 {
    match e {
        NashError::NotConverged { .. } | NashError::Region(RegionError::MaxIterations { .. }) => EXIT_NOT_CONVERGED,
        NashError::RegionalInfeasibility { .. } | NashError::Region(RegionError::Infeasible { .. }) => EXIT_INFEASIBLE,
        NashError::Invalid(_) | NashError::Region(RegionError::InvalidProblem { .. }) => EXIT_VALIDATION,
    }
}

impl From<NashError> for Failure {
    fn from(e: NashError) -> Self {
        Self::new(nash_code(&e), e)
    }
}

impl From<DiagError> for Failure {
    fn from(e: DiagError) -> Self {
        match e {
            DiagError::Nash(n) => n.into(),
            DiagError::GridMismatch(_) | DiagError::UnknownRegion(_) | DiagError::TemperatureMismatch(_) => Self::new(EXIT_VALIDATION, e),
            _ => Self::new(EXIT_OTHER, e),
        }
    }
}

/// Worker count from the environment, if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::new(EXIT_VALIDATION, format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Calibrate { data_dir, out } => cmd_calibrate(data_dir.as_deref(), &out),
        Command::Solve(args) => cmd_solve(&args),
        Command::Diagnose { archive, no_ets_archive, out } => cmd_diagnose(&archive, no_ets_archive.as_deref(), &out),
        Command::Compare { archives, out } => cmd_compare(&archives, &out),
    }
}

fn dataset_hash(dir: &Path) -> Result<String, Failure> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::new(EXIT_VALIDATION, format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    names.sort();
    let mut listing = String::new();
    for p in names {
        let bytes = std::fs::read(&p).map_err(|e| Failure::new(EXIT_VALIDATION, format!("{}: {e}", p.display())))?;
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        listing.push_str(&format!("{name} {}\n", sha256_hex(&bytes)));
    }
    Ok(sha256_hex(listing.as_bytes()))
}

pub fn cmd_calibrate(data_dir: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let dir = data_dir.map(Path::to_path_buf).unwrap_or_else(bundled_dir);
    let ds = CalibrationDataset::load(&dir)?;
    let source = if data_dir.is_some() { "dataset directory" } else { "bundled synthetic dataset" };
    let result = calibrate(&ds, &crate::params::GlobalParams::default(), source)?;
    for f in &result.flags {
        eprintln!("warning: {f}");
    }
    write_with_manifest(out, "calibrate", dataset_hash(&dir)?, None, &result.files()).map_err(|e| Failure::new(EXIT_OTHER, e))?;
    Ok(())
}

/// Config with command-line overrides applied, and the directory relative
/// paths in it resolve against.
pub fn solve_config(args: &SolveArgs) -> Result<(ScenarioConfig, PathBuf), Failure> {
    let (mut cfg, base) = match &args.config {
        Some(p) => (ScenarioConfig::load(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (ScenarioConfig::default(), PathBuf::from(".")),
    };
    if let Some(h) = args.horizon {
        cfg.global.horizon = h;
    }
    if let Some(t) = args.tol {
        cfg.nash.price_tol = t;
        cfg.nash.emission_tol = t;
    }
    if let Some(w) = args.omega {
        cfg.nash.omega = w;
    }
    if args.no_ets {
        cfg.ets_enabled = false;
    }
    if let Some(c) = &args.cap_scenario {
        cfg.cap_scenario = c.clone();
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok((cfg, base))
}

pub fn cmd_solve(args: &SolveArgs) -> Result<(), Failure> {
    let (cfg, base) = solve_config(args)?;
    let scenario = cfg.build(&base)?;
    let write = |eq: &EquilibriumSolution| archive::write_solution(&cfg.output_dir, &cfg, eq).map_err(|e| Failure::new(EXIT_OTHER, e));
    match solve_nash(&scenario, &cfg.nash, &cfg.solver) {
        Ok(eq) => write(&eq).map(|_| ()),
        Err(NashError::NotConverged { iterations, last }) => {
            write(&last)?;
            Err(Failure::new(EXIT_NOT_CONVERGED, format!("no equilibrium after {iterations} iterations; last iterate written")))
        }
        Err(e) => Err(e.into()),
    }
}

fn csv_file(name: &str, text: String) -> (String, Vec<u8>) {
    (name.to_string(), text.into_bytes())
}

pub fn cmd_diagnose(with_ets: &Path, without: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let (cfg, eq) = archive::read_solution(with_ets)?;
    let mut files = vec![csv_file("report.csv", diagnostics::report_csv(&diagnostics::policy_report(&eq)?))];
    let mut input = archive::read_manifest(with_ets)?.input_sha256;
    if let Some(path) = without {
        let (_, other) = archive::read_solution(path)?;
        if !eq.scenario.ets_enabled || other.scenario.ets_enabled {
            return Err(Failure::new(EXIT_VALIDATION, "expected a trading archive followed by a no-trade archive"));
        }
        let mut a = eq.scenario.clone();
        a.ets_enabled = false;
        if a != other.scenario {
            return Err(Failure::new(EXIT_VALIDATION, "archives were solved from different scenarios"));
        }
        let cmp = adjusted_cap_comparison(&other.scenario, &cfg.nash, &cfg.solver)?;
        files.push(csv_file("welfare.csv", diagnostics::welfare_csv(&cmp.welfare)));
        files.push(csv_file("report_adjusted_ets.csv", diagnostics::report_csv(&diagnostics::policy_report(&cmp.ets)?)));
        input = sha256_hex(format!("{input}\n{}", archive::read_manifest(path)?.input_sha256).as_bytes());
    }
    write_with_manifest(out, "diagnose", input, None, &files).map_err(|e| Failure::new(EXIT_OTHER, e))?;
    Ok(())
}

pub fn cmd_compare(archives: &[PathBuf], out: &Path) -> Result<(), Failure> {
    let mut loaded = Vec::new();
    let mut hashes = Vec::new();
    for p in archives {
        let (cfg, eq) = archive::read_solution(p)?;
        hashes.push(archive::read_manifest(p)?.input_sha256);
        let name = if eq.scenario.ets_enabled { cfg.scenario_name } else { format!("{}_no_ets", cfg.scenario_name) };
        loaded.push((name, eq));
    }
    // Repeated scenario names get a positional suffix.
    let labels: Vec<String> = loaded
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            if loaded.iter().filter(|(n, _)| n == name).count() > 1 { format!("{name}_{}", i + 1) } else { name.clone() }
        })
        .collect();
    let refs: Vec<(String, &EquilibriumSolution)> = labels.into_iter().zip(loaded.iter().map(|l| &l.1)).collect();
    let cmp = diagnostics::scenario_compare(&refs)?;
    let files: Vec<(String, Vec<u8>)> = cmp.tables.into_iter().map(|(n, t)| (n, t.into_bytes())).collect();
    hashes.sort();
    write_with_manifest(out, "compare", sha256_hex(hashes.join("\n").as_bytes()), None, &files).map_err(|e| Failure::new(EXIT_OTHER, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_and_validate() {
        let args = SolveArgs {
            config: None,
            out: Some("o".into()),
            horizon: Some(40),
            tol: Some(1e-5),
            omega: Some(0.5),
            no_ets: true,
            cap_scenario: Some("netzero2070".into()),
        };
        let (cfg, _) = solve_config(&args).unwrap();
        assert_eq!(cfg.global.horizon, 40);
        assert_eq!(cfg.nash.price_tol, 1e-5);
        assert_eq!(cfg.nash.omega, 0.5);
        assert!(!cfg.ets_enabled);
        assert_eq!(cfg.cap_scenario, "netzero2070");
        let bad = SolveArgs { omega: Some(1.5), ..args };
        assert_eq!(solve_config(&bad).unwrap_err().code, EXIT_VALIDATION);
    }

    #[test]
    fn nash_errors_map_to_exit_codes() {
        assert_eq!(nash_code(&NashError::RegionalInfeasibility { region: "US".into(), year: 2030 }), EXIT_INFEASIBLE);
        assert_eq!(nash_code(&NashError::Invalid("x".into())), EXIT_VALIDATION);
    }

    #[test]
    fn missing_dataset_file_is_a_validation_failure() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_calibrate(Some(dir.path()), &dir.path().join("out")).unwrap_err();
        assert_eq!(err.code, EXIT_VALIDATION);
        assert!(err.message.contains("rcp.csv"), "{}", err.message);
    }
}
