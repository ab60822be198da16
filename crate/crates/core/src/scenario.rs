//! Scenario configuration and assembly of solver-ready regional parameters.
//!
//! A scenario combines the bundled parameter tables, the bundled synthetic
//! initial conditions (population, output, capital, emissions, intensity
//! trend), a cap pathway selector and solver settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::tfp_extend::{extend_tfp_growth, CATCH_UP, LAST_CENTURY_INDEX};
use crate::model::{AbatementParams, DamageParams};
use crate::nash::NashConfig;
use crate::params::tables::{self, annual_caps};
use crate::params::{tfp_growth_in_century, tfp_path, GlobalParams, ParamError, RegionParams, TfpParams, BASE_YEAR, REGIONS};
use crate::region::SolverOptions;

pub const SCHEMA_VERSION: u32 = 1;

pub const FIXTURE_CSV: &str = include_str!("../data/fixture_regions.csv");

/// Rate at which population approaches its long-run level.
pub const POPULATION_CONVERGENCE: f64 = 0.03;
/// Rate at which the decline of carbon intensity itself slows down.
pub const INTENSITY_DECLINE_DECAY: f64 = 0.005;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Instance {
    /// The calibrated regions (all twelve unless `regions` selects a subset).
    #[default]
    Calibrated,
    /// A small synthetic two-region world.
    Toy,
}

/// Cap pathway selector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CapScenario {
    Baseline,
    /// Pledged caps through 2030, then linear to zero at the given year.
    NetZero(i32),
    /// Caps scaled so they never bind.
    Unbounded,
    /// Caps read from a CSV file laid out like the bundled cap table.
    Custom(PathBuf),
}

impl CapScenario {
    pub fn parse(s: &str) -> Result<Self, ScenarioError> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "unbounded" => Ok(Self::Unbounded),
            _ => {
                if let Some(y) = s.strip_prefix("netzero") {
                    let year: i32 = y.parse().map_err(|_| ScenarioError::Config(format!("bad cap scenario {s:?}")))?;
                    if year <= 2030 {
                        return Err(ScenarioError::Config(format!("net-zero year {year} must be after 2030")));
                    }
                    Ok(Self::NetZero(year))
                } else if let Some(p) = s.strip_prefix("custom:") {
                    Ok(Self::Custom(PathBuf::from(p)))
                } else {
                    Err(ScenarioError::Config(format!(
                        "unknown cap scenario {s:?} (expected baseline, netzeroYYYY, unbounded or custom:<file>)"
                    )))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Baseline => "baseline".into(),
            Self::NetZero(y) => format!("netzero{y}"),
            Self::Unbounded => "unbounded".into(),
            Self::Custom(p) => format!("custom:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub scenario_name: String,
    #[serde(default)]
    pub instance: Instance,
    pub ets_enabled: bool,
    pub cap_scenario: String,
    /// Subset of regions to include; empty means all.
    #[serde(default)]
    pub regions: Vec<String>,
    /// Fitted parameter file overriding the bundled tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_file: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub global: GlobalParams,
    pub solver: SolverOptions,
    pub nash: NashConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario_name: "baseline".into(),
            instance: Instance::Calibrated,
            ets_enabled: true,
            cap_scenario: "baseline".into(),
            regions: Vec::new(),
            params_file: None,
            output_dir: default_output_dir(),
            global: GlobalParams::default(),
            solver: SolverOptions::default(),
            nash: NashConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn toy(horizon: usize) -> Self {
        let mut cfg = Self {
            scenario_name: "toy".into(),
            instance: Instance::Toy,
            ..Self::default()
        };
        cfg.global.horizon = horizon;
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Config(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.global.validate()?;
        CapScenario::parse(&self.cap_scenario)?;
        if !(self.solver.tol > 0.0) || self.solver.max_iterations == 0 {
            return Err(ScenarioError::Config("solver tolerance and iteration budget must be positive".into()));
        }
        self.nash.validate().map_err(ScenarioError::Config)?;
        if self.instance == Instance::Calibrated {
            for r in &self.regions {
                if !REGIONS.contains(&r.as_str()) {
                    return Err(ScenarioError::Config(format!("unknown region {r:?}")));
                }
            }
        }
        Ok(())
    }

    /// Assembles the solver-ready scenario, resolving relative paths against `base`.
    pub fn build(&self, base: &Path) -> Result<Scenario, ScenarioError> {
        self.validate()?;
        let caps = CapScenario::parse(&self.cap_scenario)?;
        let caps = match caps {
            CapScenario::Custom(p) if p.is_relative() => CapScenario::Custom(base.join(p)),
            c => c,
        };
        let overrides = match &self.params_file {
            Some(p) => {
                let path = if p.is_relative() { base.join(p) } else { p.clone() };
                Some(ParamsFile::load(&path)?)
            }
            None => None,
        };
        let mut global = self.global.clone();
        if let Some(z) = overrides.as_ref().and_then(|o| o.zeta) {
            global.zeta = z;
        }
        let mut regions = match self.instance {
            Instance::Calibrated => calibrated_regions(&global, &caps, overrides.as_ref())?,
            Instance::Toy => toy_regions(&global, &caps)?,
        };
        if !self.regions.is_empty() && self.instance == Instance::Calibrated {
            regions.retain(|r| self.regions.contains(&r.name));
        }
        for r in &regions {
            r.validate(global.horizon)?;
        }
        Ok(Scenario { name: self.scenario_name.clone(), global, regions, ets_enabled: self.ets_enabled })
    }
}

/// Solver-ready scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub global: GlobalParams,
    pub regions: Vec<RegionParams>,
    pub ets_enabled: bool,
}

impl Scenario {
    pub fn initial_cum_emissions(&self) -> f64 {
        self.global.initial_cum_emissions()
    }

    pub fn with_caps(&self, caps: &[Vec<f64>]) -> Self {
        let mut s = self.clone();
        for (r, c) in s.regions.iter_mut().zip(caps) {
            r.caps = c.clone();
        }
        s
    }
}

/// Fitted parameters written by the calibration command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ParamsFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(default)]
    pub regions: Vec<FittedRegion>,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedRegion {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abatement: Option<AbatementParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damage: Option<DamageParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
}

impl ParamsFile {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
        let f: Self = toml::from_str(&text).map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Config(format!("{}: unsupported schema_version {}", path.display(), f.schema_version)));
        }
        Ok(f)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("params file is always serializable")
    }

    fn region(&self, name: &str) -> Option<&FittedRegion> {
        self.regions.iter().find(|r| r.name == name)
    }
}

/// Synthetic initial conditions of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureRegion {
    pub name: String,
    pub population_2020: f64,
    pub population_longrun: f64,
    pub gdp_2020: f64,
    pub capital_output_ratio: f64,
    pub emissions_2020: f64,
    pub intensity_decline: f64,
}

pub fn fixture_regions() -> Result<Vec<FixtureRegion>, ParamError> {
    let table = "fixture_regions";
    let mut reader = csv::Reader::from_reader(FIXTURE_CSV.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| ParamError::Table { table, reason: e.to_string() })?;
        let num = |i: usize| -> Result<f64, ParamError> {
            rec[i].trim().parse().map_err(|_| ParamError::Table { table, reason: format!("not a number: {:?}", &rec[i]) })
        };
        out.push(FixtureRegion {
            name: rec[0].to_string(),
            population_2020: num(1)?,
            population_longrun: num(2)?,
            gdp_2020: num(3)?,
            capital_output_ratio: num(4)?,
            emissions_2020: num(5)?,
            intensity_decline: num(6)?,
        });
    }
    Ok(out)
}

pub fn population_path(l0: f64, longrun: f64, len: usize) -> Vec<f64> {
    (0..len).map(|t| longrun + (l0 - longrun) * (-POPULATION_CONVERGENCE * t as f64).exp()).collect()
}

/// `σ_{t+1} = σ_t·exp(−r0·e^{−0.005 t})`.
pub fn intensity_path(sigma0: f64, r0: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut s = sigma0;
    for t in 0..len {
        out.push(s);
        s *= (-r0 * (-INTENSITY_DECLINE_DECAY * t as f64).exp()).exp();
    }
    out
}

/// Annual caps for one region under a selector, from its five-yearly row.
pub fn cap_path(years: &[i32], values: &[f64], scenario: &CapScenario, len: usize) -> Vec<f64> {
    let base = annual_caps(years, values, len);
    match scenario {
        CapScenario::Baseline | CapScenario::Custom(_) => base,
        CapScenario::Unbounded => base.iter().map(|_| 1e3).collect(),
        CapScenario::NetZero(year) => {
            let pivot = (2030 - BASE_YEAR) as usize;
            let zero = (*year - BASE_YEAR) as usize;
            let level = base[pivot.min(len - 1)];
            (0..len)
                .map(|t| {
                    if t <= pivot {
                        base[t]
                    } else if t >= zero {
                        0.0
                    } else {
                        level * (zero - t) as f64 / (zero - pivot) as f64
                    }
                })
                .collect()
        }
    }
}

fn read_custom_caps(path: &Path) -> Result<tables::CapTable, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
    tables::parse_caps(&text).map_err(ScenarioError::from)
}

fn calibrated_regions(
    global: &GlobalParams,
    caps: &CapScenario,
    overrides: Option<&ParamsFile>,
) -> Result<Vec<RegionParams>, ScenarioError> {
    let h = global.horizon;
    let abatement = tables::abatement()?;
    let damage = tables::damage()?;
    let tfp = tables::tfp()?;
    let cap_table = match caps {
        CapScenario::Custom(p) => read_custom_caps(p)?,
        _ => tables::caps()?,
    };
    let fixtures = fixture_regions()?;
    let lookup = |what: &'static str, name: &str| ParamError::Table { table: what, reason: format!("missing region {name}") };

    struct Partial {
        name: String,
        abatement: AbatementParams,
        damage: DamageParams,
        tfp: TfpParams,
        k0: f64,
        y0_pc: f64,
        population: Vec<f64>,
        intensity: Vec<f64>,
        caps: Vec<f64>,
    }
    let t0 = global.initial_temperature;
    let mut parts = Vec::new();
    for name in REGIONS {
        let fit = overrides.and_then(|o| o.region(name));
        let mut ab = abatement.iter().find(|r| r.0 == name).ok_or_else(|| lookup("abatement", name))?.1;
        let mut dm = damage.iter().find(|r| r.0 == name).ok_or_else(|| lookup("damage", name))?.1;
        let (_, mut g0, mut d) = tfp.iter().find(|r| r.0 == name).cloned().ok_or_else(|| lookup("tfp", name))?;
        if let Some(f) = fit {
            ab = f.abatement.unwrap_or(ab);
            dm = f.damage.unwrap_or(dm);
            g0 = f.g0.unwrap_or(g0);
            d = f.d.unwrap_or(d);
        }
        let fx = fixtures.iter().find(|f| f.name == name).ok_or_else(|| lookup("fixture_regions", name))?;
        let row = &cap_table.rows.iter().find(|r| r.0 == name).ok_or_else(|| lookup("caps", name))?.1;
        let population = population_path(fx.population_2020, fx.population_longrun, h + 1);
        let k0 = fx.capital_output_ratio * fx.gdp_2020;
        // Net output in 2020 matches observed GDP.
        let q0 = fx.gdp_2020 * dm.denominator(t0);
        let a0 = q0 / (k0.powf(global.alpha) * population[0].powf(1.0 - global.alpha));
        let sigma0 = fx.emissions_2020 / q0;
        parts.push(Partial {
            name: name.to_string(),
            abatement: ab,
            damage: dm,
            tfp: TfpParams { g0, d, a0 },
            k0,
            y0_pc: fx.gdp_2020 / population[0],
            population,
            intensity: intensity_path(sigma0, fx.intensity_decline, h),
            caps: cap_path(&cap_table.years, row, caps, h),
        });
    }

    // In-century growth, then the catch-up extension.
    let in_century: Vec<Vec<f64>> =
        parts.iter().map(|p| (0..=LAST_CENTURY_INDEX).map(|t| tfp_growth_in_century(&p.tfp, t)).collect()).collect();
    let y79: Vec<f64> = parts
        .iter()
        .zip(&in_century)
        .map(|(p, g)| {
            let log_a: f64 = g[..LAST_CENTURY_INDEX].iter().sum();
            p.y0_pc * (log_a / (1.0 - global.alpha)).exp()
        })
        .collect();
    let us = parts.iter().position(|p| p.name == "US").expect("US is a bundled region");
    let growth = extend_tfp_growth(&in_century, &y79, us, global.alpha, CATCH_UP, h + 1);

    Ok(parts
        .into_iter()
        .zip(growth)
        .map(|(p, g)| RegionParams {
            tfp: tfp_path(p.tfp.a0, &g, h + 1),
            name: p.name,
            abatement: p.abatement,
            damage: p.damage,
            tfp_params: p.tfp,
            initial_capital: p.k0,
            population: p.population,
            intensity: p.intensity,
            caps: p.caps,
        })
        .collect())
}

/// Two synthetic regions: a rich low-damage emitter and a poorer, more
/// damage-exposed one. Caps are slack for the first five years, then step
/// below business-as-usual emissions and tighten linearly for a decade.
fn toy_regions(global: &GlobalParams, caps: &CapScenario) -> Result<Vec<RegionParams>, ScenarioError> {
    let h = global.horizon;
    let specs = [("North", 1.0, 30.0, 2.0, 0.004, 0.0040, 0.0020), ("South", 3.0, 15.0, 3.0, 0.010, 0.0080, 0.0040)];
    let mut out = Vec::new();
    for (name, l0, gdp, e0, g0, pi1, pi2) in specs {
        let population = vec![l0; h + 1];
        let damage = DamageParams { pi1, pi2 };
        let k0 = 2.5 * gdp;
        let q0 = gdp * damage.denominator(global.initial_temperature);
        let a0 = q0 / (f64::powf(k0, global.alpha) * f64::powf(l0, 1.0 - global.alpha));
        let tfp = TfpParams { g0, d: 0.01, a0 };
        let growth: Vec<f64> = (0..=h).map(|t| tfp_growth_in_century(&tfp, t)).collect();
        let years = [BASE_YEAR, BASE_YEAR + 4, BASE_YEAR + 5, BASE_YEAR + 15];
        let values = [1.3 * e0, 1.3 * e0, 0.8 * e0, 0.4 * e0];
        let cap = match caps {
            CapScenario::Custom(p) => {
                let t = read_custom_caps(p)?;
                let row = t
                    .rows
                    .iter()
                    .find(|r| r.0 == name)
                    .ok_or_else(|| ScenarioError::Config(format!("custom caps lack region {name}")))?;
                annual_caps(&t.years, &row.1, h)
            }
            other => cap_path(&years, &values, other, h),
        };
        out.push(RegionParams {
            name: name.into(),
            abatement: AbatementParams { b1: 0.5, b2: 2.8, b3: 1.5, b4: 0.05 },
            damage,
            tfp_params: tfp,
            initial_capital: k0,
            population,
            intensity: intensity_path(e0 / q0, 0.015, h),
            caps: cap,
            tfp: tfp_path(a0, &growth, h + 1),
        });
    }
    Ok(out)
}
