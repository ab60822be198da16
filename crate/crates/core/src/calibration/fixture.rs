//! Synthetic calibration dataset.
//!
//! The external series the fits were designed for are not redistributable, so
//! the bundled dataset is generated here from the shipped parameter tables and
//! the synthetic regional initial conditions. Calibrating on it recovers the
//! tables, which makes it a round-trip fixture for the whole pipeline.

use super::dataset::{CalibrationDataset, GdpRow, HistoryRow, KahnRow, NdcRow, NetzeroRow, PledgeKind, RcpRow, TaxRow};
use super::tfp_damage::{simulate_gdp, TfpDamageData, TfpDamageParams, CC_YEARS, INNER_HORIZON, NOCC_YEARS};
use super::CalibError;
use crate::model::{AbatementParams, DamageParams};
use crate::params::{tables, GlobalParams, BASE_YEAR, REGIONS};
use crate::scenario::{fixture_regions, intensity_path, population_path, FixtureRegion};

/// °C per GtC used to generate temperatures.
pub const TRUE_ZETA: f64 = 0.0021;
pub const RCP_START: i32 = 2000;
pub const RCP_END: i32 = 2120;
/// Warming from emissions before `RCP_START`.
pub const RCP_OFFSET: f64 = 0.82;
pub const TAX_LEVELS: [f64; 10] = [10.0, 25.0, 50.0, 100.0, 150.0, 200.0, 300.0, 400.0, 600.0, 800.0];
pub const TAX_YEAR_STEP: usize = 5;
pub const TAX_YEARS: usize = 81;
/// Share of each region's emissions in its pledging country; the rest sits in
/// a country without a pledge that inherits it.
pub const MAIN_SHARE: f64 = 0.9;
pub const RCP45: &str = "rcp45";
pub const RCP26: &str = "rcp26";
pub const RCP85: &str = "rcp85";

/// Stylized emission paths, GtC per year.
fn rcp_emissions(scenario: &str, year: i32) -> f64 {
    let s = (year - RCP_START) as f64;
    let bump = |peak: f64, at: f64, width: f64| peak * (-((s - at) / width).powi(2)).exp();
    match scenario {
        RCP26 => (8.0 + bump(2.5, 18.0, 12.0) - 0.09 * s).max(0.3),
        RCP45 => 8.0 + bump(4.0, 40.0, 25.0) - 0.03 * s.min(100.0),
        "rcp60" => 8.0 + bump(9.0, 80.0, 35.0),
        RCP85 => 8.0 + 0.2 * s + 0.0004 * s * s,
        _ => 0.0,
    }
}

/// Internal variability added to every temperature path.
fn wobble(year: i32) -> f64 {
    0.03 * (0.57 * (year - RCP_START) as f64).sin()
}

pub fn rcp_rows() -> Vec<RcpRow> {
    let mut rows = Vec::new();
    for scenario in [RCP26, RCP45, "rcp60", RCP85] {
        let mut cum = 0.0;
        for year in RCP_START..=RCP_END {
            let e = rcp_emissions(scenario, year);
            rows.push(RcpRow { scenario: scenario.into(), year, emissions_gtc: e, temp_c: RCP_OFFSET + TRUE_ZETA * cum + wobble(year) });
            cum += e;
        }
    }
    rows
}

fn temperature(rows: &[RcpRow], scenario: &str) -> Vec<f64> {
    rows.iter().filter(|r| r.scenario == scenario && r.year >= BASE_YEAR).map(|r| r.temp_c).collect()
}

/// Inputs of the TFP/damage fit for one fixture region, without the GDP series.
pub fn tfp_data(fx: &FixtureRegion, rcp45: &[f64]) -> TfpDamageData {
    let population = population_path(fx.population_2020, fx.population_longrun, INNER_HORIZON + 1);
    TfpDamageData {
        region: fx.name.clone(),
        initial_output_per_capita: fx.gdp_2020 / population[0],
        population,
        initial_capital: fx.capital_output_ratio * fx.gdp_2020,
        gdp_nocc: vec![],
        gdp_cc: vec![],
        temperature: rcp45.to_vec(),
    }
}

fn lookup<T: Copy>(rows: &[(String, T)], name: &str) -> Result<T, CalibError> {
    rows.iter()
        .find(|r| r.0 == name)
        .map(|r| r.1)
        .ok_or_else(|| CalibError::InvalidInput(format!("no tabulated parameters for {name}")))
}

/// Cost-minimizing control rate under a tax, capped at 1.
fn control_under_tax(tax: f64, a: &AbatementParams, t: f64) -> f64 {
    (tax / (1000.0 * a.b2 * a.level(t))).powf(1.0 / (a.b2 - 1.0)).min(1.0)
}

/// Alternative damage coefficients used to synthesize projected losses.
pub fn kahn_damage(d: &DamageParams) -> DamageParams {
    DamageParams { pi1: 0.8 * d.pi1, pi2: 1.25 * d.pi2 }
}

/// Directory of the bundled copy of [`synthetic_dataset`].
pub fn bundled_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("calibration")
}

pub fn synthetic_dataset() -> Result<CalibrationDataset, CalibError> {
    let global = GlobalParams::default();
    let table_err = |e: crate::params::ParamError| CalibError::InvalidInput(e.to_string());
    let fixtures = fixture_regions().map_err(table_err)?;
    let abatement = tables::abatement().map_err(table_err)?;
    let damage = tables::damage().map_err(table_err)?;
    let tfp: Vec<(String, (f64, f64))> = tables::tfp().map_err(table_err)?.into_iter().map(|(n, g, d)| (n, (g, d))).collect();
    let caps = tables::caps().map_err(table_err)?;

    let rcp = rcp_rows();
    let t45 = temperature(&rcp, RCP45);
    let (t26, t85) = (temperature(&rcp, RCP26), temperature(&rcp, RCP85));

    let mut ds = CalibrationDataset { rcp, ..Default::default() };
    for name in REGIONS {
        let fx = fixtures
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| CalibError::InvalidInput(format!("no fixture for {name}")))?;
        let ab = lookup(&abatement, name)?;
        let dm = lookup(&damage, name)?;
        let (g0, d) = lookup(&tfp, name)?;

        let data = tfp_data(fx, &t45);
        let (nocc, cc) = simulate_gdp(&data, &global, &TfpDamageParams { g0, d, damage: dm })?;
        for t in 0..NOCC_YEARS {
            ds.gdp.push(GdpRow {
                region: name.into(),
                year: BASE_YEAR + t as i32,
                gdppc_nocc: nocc[t],
                gdppc_cc: (t < CC_YEARS).then(|| cc[t]),
            });
        }

        // Zero-tax projection: gross output without damages and a declining
        // carbon intensity anchored on 2020 emissions.
        let gross: Vec<f64> = (0..TAX_YEARS).map(|t| nocc[t] * data.population[t]).collect();
        let sigma = intensity_path(fx.emissions_2020 / gross[0], fx.intensity_decline, TAX_YEARS);
        let years: Vec<usize> = (0..TAX_YEARS).step_by(TAX_YEAR_STEP).collect();
        for &t in &years {
            ds.tax.push(TaxRow {
                scenario: "tax0".into(),
                year: BASE_YEAR + t as i32,
                tax_usd_tc: 0.0,
                region: name.into(),
                emissions_gtc: sigma[t] * gross[t],
                gdp_tusd: Some(gross[t]),
            });
        }
        for tax in TAX_LEVELS {
            for &t in &years {
                let mu = control_under_tax(tax, &ab, t as f64);
                ds.tax.push(TaxRow {
                    scenario: format!("tax{tax}"),
                    year: BASE_YEAR + t as i32,
                    tax_usd_tc: tax,
                    region: name.into(),
                    emissions_gtc: (1.0 - mu) * sigma[t] * gross[t],
                    gdp_tusd: None,
                });
            }
        }

        let alt = kahn_damage(&dm);
        for t in 0..t26.len().min(t85.len()) {
            ds.kahn.push(KahnRow {
                region: name.into(),
                year: BASE_YEAR + t as i32,
                loss_rcp26: 1.0 - 1.0 / alt.denominator(t26[t]),
                loss_rcp85: 1.0 - 1.0 / alt.denominator(t85[t]),
            });
        }

        countries(&mut ds, fx, &caps, &gross, &sigma)?;
    }
    Ok(ds)
}

/// One pledging country and one inheriting country per region, shaped so the
/// region's pathway follows the published baseline row.
fn countries(ds: &mut CalibrationDataset, fx: &FixtureRegion, caps: &tables::CapTable, gross: &[f64], sigma: &[f64]) -> Result<(), CalibError> {
    let row = &caps
        .rows
        .iter()
        .find(|r| r.0 == fx.name)
        .ok_or_else(|| CalibError::InvalidInput(format!("no cap row for {}", fx.name)))?
        .1;
    let at = |year: i32| caps.years.iter().position(|&y| y == year).map(|i| row[i]);
    let (c2020, c2030) = (at(2020).unwrap_or(fx.emissions_2020), at(2030).unwrap_or(fx.emissions_2020));
    let netzero = caps.years.iter().zip(row).find(|(_, &v)| v == 0.0).map(|(&y, _)| y).unwrap_or(2075);
    let t2030 = (2030 - BASE_YEAR) as usize;
    let intensity = fx.name == "China";

    for (suffix, share, pledged) in [("main", MAIN_SHARE, true), ("rest", 1.0 - MAIN_SHARE, false)] {
        let country = format!("{}-{suffix}", fx.name);
        for (k, year) in (2014..=2018).enumerate() {
            // Gentle rise into 2020.
            let e = share * c2020 * (1.0 - 0.004 * (4 - k) as f64);
            ds.history.push(HistoryRow { country: country.clone(), region: fx.name.clone(), year, emissions_gtc: e });
        }
        let base_emissions = share * c2020;
        let base_intensity = share * sigma[0];
        let gdp_target = gross[t2030];
        let reduction = if intensity {
            1.0 - share * c2030 / (base_intensity * gdp_target)
        } else {
            1.0 - c2030 / c2020
        };
        ds.ndc.push(NdcRow {
            country: country.clone(),
            region: fx.name.clone(),
            population: share * fx.population_2020,
            pledge_kind: match (pledged, intensity) {
                (false, _) => PledgeKind::None,
                (true, true) => PledgeKind::Intensity,
                (true, false) => PledgeKind::Emissions,
            },
            target_year: pledged.then_some(2030),
            reduction: pledged.then_some(reduction),
            base_emissions_gtc: base_emissions,
            base_intensity_gtc_per_tusd: base_intensity,
            gdp_target_tusd: gdp_target,
        });
        ds.netzero.push(NetzeroRow { country, netzero_year: netzero });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic_and_valid() {
        let a = synthetic_dataset().unwrap();
        assert_eq!(a, synthetic_dataset().unwrap());
        a.validate().unwrap();
        assert_eq!(a.gdp.len(), 12 * NOCC_YEARS);
        assert_eq!(a.tax.len(), 12 * 11 * 17);
    }

    #[test]
    fn bundled_files_match_generator() {
        let loaded = CalibrationDataset::load(&bundled_dir()).unwrap();
        assert_eq!(loaded, synthetic_dataset().unwrap());
    }

    #[test]
    fn rcp45_starts_near_model_initial_temperature() {
        let t = temperature(&rcp_rows(), RCP45);
        assert!((t[0] - GlobalParams::default().initial_temperature).abs() < 0.05, "{}", t[0]);
    }
}
