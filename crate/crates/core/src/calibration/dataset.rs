//! CSV ingestion of the external calibration series.
//!
//! A dataset directory holds `rcp.csv`, `gdp.csv`, `tax_scenarios.csv`,
//! `history.csv`, `ndc.csv` and `netzero.csv`, plus an optional `kahn.csv`.
//! Units are part of the column names.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::abatement::TaxRun;
use super::caps::{Country, Pledge, TargetKind};
use super::tcre::RcpSeries;
use super::CalibError;
use crate::params::BASE_YEAR;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcpRow {
    pub scenario: String,
    pub year: i32,
    pub emissions_gtc: f64,
    pub temp_c: f64,
}

/// GDP per capita in thousand USD (equivalently $T per billion people).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdpRow {
    pub region: String,
    pub year: i32,
    pub gdppc_nocc: f64,
    /// Only the first years carry a value.
    pub gdppc_cc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxRow {
    pub scenario: String,
    pub year: i32,
    pub tax_usd_tc: f64,
    pub region: String,
    pub emissions_gtc: f64,
    /// Gross output in $T; needed on the zero-tax scenario for intensities.
    pub gdp_tusd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub country: String,
    pub region: String,
    pub year: i32,
    pub emissions_gtc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PledgeKind {
    Emissions,
    Intensity,
    None,
}

/// One country's near-term pledge and the base quantities either kind of
/// pledge needs, so inherited pledges can be applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdcRow {
    pub country: String,
    pub region: String,
    pub population: f64,
    pub pledge_kind: PledgeKind,
    pub target_year: Option<i32>,
    pub reduction: Option<f64>,
    pub base_emissions_gtc: f64,
    pub base_intensity_gtc_per_tusd: f64,
    pub gdp_target_tusd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetzeroRow {
    pub country: String,
    pub netzero_year: i32,
}

/// Projected fractional GDP loss under a low and a high warming path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KahnRow {
    pub region: String,
    pub year: i32,
    pub loss_rcp26: f64,
    pub loss_rcp85: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationDataset {
    pub rcp: Vec<RcpRow>,
    pub gdp: Vec<GdpRow>,
    pub tax: Vec<TaxRow>,
    pub history: Vec<HistoryRow>,
    pub ndc: Vec<NdcRow>,
    pub netzero: Vec<NetzeroRow>,
    pub kahn: Vec<KahnRow>,
}

/// Tax runs of one region, on that region's year grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionTaxData {
    pub years: Vec<i32>,
    pub zero_tax_emissions: Vec<f64>,
    pub zero_tax_output: Vec<f64>,
    pub runs: Vec<TaxRun>,
}

pub const FILES: [&str; 6] = ["rcp.csv", "gdp.csv", "tax_scenarios.csv", "history.csv", "ndc.csv", "netzero.csv"];
pub const KAHN_FILE: &str = "kahn.csv";

fn read_rows<T: DeserializeOwned>(dir: &Path, file: &str) -> Result<Vec<T>, CalibError> {
    let path = dir.join(file);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| CalibError::Io { path: path.display().to_string(), reason: e.to_string() })?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| CalibError::Schema { file: file.into(), reason: format!("row {}: {e}", i + 1) }))
        .collect()
}

fn write_rows<T: Serialize>(dir: &Path, file: &str, rows: &[T]) -> Result<(), CalibError> {
    let path = dir.join(file);
    let io = |e: csv::Error| CalibError::Io { path: path.display().to_string(), reason: e.to_string() };
    let mut writer = csv::Writer::from_path(&path).map_err(io)?;
    for r in rows {
        writer.serialize(r).map_err(io)?;
    }
    writer.flush().map_err(|e| CalibError::Io { path: path.display().to_string(), reason: e.to_string() })
}

fn schema(file: &str, reason: impl Into<String>) -> CalibError {
    CalibError::Schema { file: file.into(), reason: reason.into() }
}

/// Checks that `years` is strictly consecutive.
fn annual(file: &str, key: &str, years: &[i32]) -> Result<(), CalibError> {
    if years.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(schema(file, format!("{key}: years are not a consecutive annual grid")));
    }
    Ok(())
}

/// Groups rows by key, preserving first-appearance order of keys.
fn grouped<'a, T>(rows: &'a [T], key: impl Fn(&'a T) -> &'a str) -> Vec<(&'a str, Vec<&'a T>)> {
    let mut out: Vec<(&'a str, Vec<&'a T>)> = Vec::new();
    let mut index: BTreeMap<&'a str, usize> = BTreeMap::new();
    for r in rows {
        let k = key(r);
        let slot = *index.entry(k).or_insert_with(|| {
            out.push((k, Vec::new()));
            out.len() - 1
        });
        out[slot].1.push(r);
    }
    out
}

impl CalibrationDataset {
    pub fn load(dir: &Path) -> Result<Self, CalibError> {
        let kahn = if dir.join(KAHN_FILE).exists() { read_rows(dir, KAHN_FILE)? } else { Vec::new() };
        let ds = Self {
            rcp: read_rows(dir, FILES[0])?,
            gdp: read_rows(dir, FILES[1])?,
            tax: read_rows(dir, FILES[2])?,
            history: read_rows(dir, FILES[3])?,
            ndc: read_rows(dir, FILES[4])?,
            netzero: read_rows(dir, FILES[5])?,
            kahn,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CalibError> {
        std::fs::create_dir_all(dir).map_err(|e| CalibError::Io { path: dir.display().to_string(), reason: e.to_string() })?;
        write_rows(dir, FILES[0], &self.rcp)?;
        write_rows(dir, FILES[1], &self.gdp)?;
        write_rows(dir, FILES[2], &self.tax)?;
        write_rows(dir, FILES[3], &self.history)?;
        write_rows(dir, FILES[4], &self.ndc)?;
        write_rows(dir, FILES[5], &self.netzero)?;
        if !self.kahn.is_empty() {
            write_rows(dir, KAHN_FILE, &self.kahn)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CalibError> {
        self.rcp_series()?;
        self.gdp_series()?;
        self.tax_data()?;
        if self.rcp.iter().any(|r| r.emissions_gtc < 0.0) {
            return Err(schema("rcp.csv", "negative emissions"));
        }
        if self.history.iter().any(|r| r.emissions_gtc < 0.0) {
            return Err(schema("history.csv", "negative emissions"));
        }
        self.countries()?;
        Ok(())
    }

    pub fn rcp_series(&self) -> Result<Vec<RcpSeries>, CalibError> {
        grouped(&self.rcp, |r| &r.scenario)
            .into_iter()
            .map(|(name, rows)| {
                let years: Vec<i32> = rows.iter().map(|r| r.year).collect();
                annual("rcp.csv", name, &years)?;
                Ok(RcpSeries {
                    scenario: name.to_string(),
                    years,
                    emissions: rows.iter().map(|r| r.emissions_gtc).collect(),
                    temperature: rows.iter().map(|r| r.temp_c).collect(),
                })
            })
            .collect()
    }

    /// Temperature of one scenario from the base year on.
    pub fn temperature_from_base(&self, scenario: &str) -> Result<Vec<f64>, CalibError> {
        let temps: Vec<f64> = self.rcp.iter().filter(|r| r.scenario == scenario && r.year >= BASE_YEAR).map(|r| r.temp_c).collect();
        if temps.is_empty() {
            return Err(schema("rcp.csv", format!("no {scenario} rows from {BASE_YEAR}")));
        }
        Ok(temps)
    }

    /// `(region, no-impact path, with-impact path)`, both starting in the base year.
    pub fn gdp_series(&self) -> Result<Vec<(String, Vec<f64>, Vec<f64>)>, CalibError> {
        grouped(&self.gdp, |r| &r.region)
            .into_iter()
            .map(|(name, rows)| {
                let years: Vec<i32> = rows.iter().map(|r| r.year).collect();
                annual("gdp.csv", name, &years)?;
                if years.first() != Some(&BASE_YEAR) {
                    return Err(schema("gdp.csv", format!("{name}: series must start in {BASE_YEAR}")));
                }
                let cc: Vec<f64> = rows.iter().map_while(|r| r.gdppc_cc).collect();
                Ok((name.to_string(), rows.iter().map(|r| r.gdppc_nocc).collect(), cc))
            })
            .collect()
    }

    /// Per-region tax runs; the zero-tax scenario is the one whose taxes are
    /// all zero.
    pub fn tax_data(&self) -> Result<BTreeMap<String, RegionTaxData>, CalibError> {
        const FILE: &str = "tax_scenarios.csv";
        if self.tax.iter().any(|r| r.emissions_gtc < 0.0) {
            return Err(schema(FILE, "negative emissions"));
        }
        let mut out = BTreeMap::new();
        for (region, rows) in grouped(&self.tax, |r| &r.region) {
            let mut scenarios: Vec<(&str, Vec<&TaxRow>)> = Vec::new();
            for r in rows {
                match scenarios.iter_mut().find(|(name, _)| *name == r.scenario) {
                    Some((_, rs)) => rs.push(r),
                    None => scenarios.push((&r.scenario, vec![r])),
                }
            }
            let zero: Vec<&(&str, Vec<&TaxRow>)> = scenarios.iter().filter(|(_, rs)| rs.iter().all(|r| r.tax_usd_tc == 0.0)).collect();
            let [(_, zero_rows)] = zero.as_slice() else {
                return Err(schema(FILE, format!("{region}: expected exactly one zero-tax scenario, found {}", zero.len())));
            };
            let years: Vec<i32> = zero_rows.iter().map(|r| r.year).collect();
            let zero_tax_output = zero_rows
                .iter()
                .map(|r| r.gdp_tusd.ok_or_else(|| schema(FILE, format!("{region}: zero-tax rows need gdp_tusd"))))
                .collect::<Result<Vec<f64>, _>>()?;
            let mut runs = Vec::new();
            for (name, rs) in &scenarios {
                if rs.iter().map(|r| r.year).ne(years.iter().copied()) {
                    return Err(schema(FILE, format!("{region}/{name}: years differ from the zero-tax scenario")));
                }
                if rs.iter().all(|r| r.tax_usd_tc == 0.0) {
                    continue;
                }
                runs.push(TaxRun {
                    scenario: name.to_string(),
                    tax: rs.iter().map(|r| r.tax_usd_tc).collect(),
                    emissions: rs.iter().map(|r| r.emissions_gtc).collect(),
                });
            }
            out.insert(
                region.to_string(),
                RegionTaxData { years, zero_tax_emissions: zero_rows.iter().map(|r| r.emissions_gtc).collect(), zero_tax_output, runs },
            );
        }
        Ok(out)
    }

    /// Countries with their own pledges, ready for inheritance.
    pub fn countries(&self) -> Result<Vec<Country>, CalibError> {
        self.ndc
            .iter()
            .map(|r| {
                let pledge = match r.pledge_kind {
                    PledgeKind::None => None,
                    kind => {
                        let (Some(target_year), Some(reduction)) = (r.target_year, r.reduction) else {
                            return Err(schema("ndc.csv", format!("{}: pledge without target year or reduction", r.country)));
                        };
                        let kind = if kind == PledgeKind::Emissions { TargetKind::Emissions } else { TargetKind::Intensity };
                        Some(Pledge { kind, target_year, reduction })
                    }
                };
                Ok(Country { name: r.country.clone(), region: r.region.clone(), population: r.population, pledge })
            })
            .collect()
    }

    /// 2014-2018 emissions of a country, in year order.
    pub fn country_history(&self, country: &str) -> Vec<f64> {
        let mut rows: Vec<&HistoryRow> = self.history.iter().filter(|r| r.country == country).collect();
        rows.sort_by_key(|r| r.year);
        rows.iter().map(|r| r.emissions_gtc).collect()
    }

    pub fn netzero_year(&self, country: &str) -> Option<i32> {
        self.netzero.iter().find(|r| r.country == country).map(|r| r.netzero_year)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CalibrationDataset {
        let rcp = (2020..2025)
            .map(|y| RcpRow { scenario: "rcp45".into(), year: y, emissions_gtc: 10.0, temp_c: 1.2 + 0.02 * (y - 2020) as f64 })
            .collect();
        let gdp = (2020..2023)
            .map(|y| GdpRow { region: "US".into(), year: y, gdppc_nocc: 60.0 + y as f64 - 2020.0, gdppc_cc: (y < 2022).then_some(59.5) })
            .collect();
        let mut tax = Vec::new();
        for (s, t) in [("zero", 0.0), ("t50", 50.0)] {
            for y in [2020, 2025] {
                tax.push(TaxRow {
                    scenario: s.into(),
                    year: y,
                    tax_usd_tc: t,
                    region: "US".into(),
                    emissions_gtc: if t > 0.0 { 1.4 } else { 1.6 },
                    gdp_tusd: (t == 0.0).then_some(21.0),
                });
            }
        }
        CalibrationDataset { rcp, gdp, tax, ..Default::default() }
    }

    #[test]
    fn write_then_load_is_identity() {
        let ds = tiny();
        let dir = tempfile::tempdir().unwrap();
        ds.write(dir.path()).unwrap();
        assert_eq!(CalibrationDataset::load(dir.path()).unwrap(), ds);
    }

    #[test]
    fn grouping_and_zero_tax_detection() {
        let ds = tiny();
        let tax = ds.tax_data().unwrap();
        let us = &tax["US"];
        assert_eq!(us.years, vec![2020, 2025]);
        assert_eq!(us.zero_tax_emissions, vec![1.6, 1.6]);
        assert_eq!(us.runs.len(), 1);
        let gdp = ds.gdp_series().unwrap();
        assert_eq!(gdp[0].2, vec![59.5, 59.5]);
        assert_eq!(ds.temperature_from_base("rcp45").unwrap().len(), 5);
    }

    #[test]
    fn gaps_and_missing_zero_tax_are_schema_errors() {
        let mut ds = tiny();
        ds.rcp.remove(2);
        assert!(matches!(ds.validate(), Err(CalibError::Schema { .. })));
        let mut ds = tiny();
        ds.tax.retain(|r| r.tax_usd_tc > 0.0);
        assert!(matches!(ds.validate(), Err(CalibError::Schema { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(CalibrationDataset::load(dir.path()), Err(CalibError::Io { .. })));
    }
}
