//! Runs every fit on a dataset and assembles a parameter file.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::abatement::{fit_abatement, AbatementFit};
use super::caps::{aggregate, build_cap_pathway, pledge_target, resolve_pledges, CapPathway, TargetKind};
use super::dataset::CalibrationDataset;
use super::fixture::{tfp_data, RCP26, RCP45, RCP85};
use super::intensity::extract_carbon_intensity;
use super::kahn::fit_damage_kahn;
use super::tcre::{fit_tcre, TcreFit};
use super::tfp_damage::{fit_tfp_damage, TfpDamageFit};
use super::CalibError;
use crate::params::tables::CapTable;
use crate::params::{GlobalParams, BASE_YEAR};
use crate::scenario::{fixture_regions, FittedRegion, ParamsFile, SCHEMA_VERSION};

/// Caps are produced through 2100.
pub const CAP_YEARS: usize = 81;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutput {
    pub params: ParamsFile,
    /// Same as `params` with damages from the projected-loss fit, when the
    /// dataset has loss projections.
    pub sensitivity_params: Option<ParamsFile>,
    /// Annual caps by region, readable as a custom cap table.
    pub caps: CapTable,
    /// `(region, years, σ)` on the tax-scenario grid.
    pub intensity: Vec<(String, Vec<i32>, Vec<f64>)>,
    /// Human-readable warnings (bound hits, clamped pathways).
    pub flags: Vec<String>,
}

pub fn calibrate(ds: &CalibrationDataset, global: &GlobalParams, source: &str) -> Result<CalibrationOutput, CalibError> {
    ds.validate()?;
    let mut flags = Vec::new();

    let tcre: TcreFit = fit_tcre(&ds.rcp_series()?)?;

    let fixtures = fixture_regions().map_err(|e| CalibError::InvalidInput(e.to_string()))?;
    let t45 = ds.temperature_from_base(RCP45)?;
    let gdp = ds.gdp_series()?;
    let growth: Vec<(String, TfpDamageFit)> = gdp
        .par_iter()
        .map(|(region, nocc, cc)| {
            let fx = fixtures
                .iter()
                .find(|f| &f.name == region)
                .ok_or_else(|| CalibError::InvalidInput(format!("no initial conditions for region {region}")))?;
            let mut data = tfp_data(fx, &t45);
            data.gdp_nocc = nocc.clone();
            data.gdp_cc = cc.clone();
            Ok((region.clone(), fit_tfp_damage(&data, global)?))
        })
        .collect::<Result<_, CalibError>>()?;

    let tax = ds.tax_data()?;
    let mut intensity = Vec::new();
    let mut abatement: Vec<(String, AbatementFit)> = Vec::new();
    for (region, data) in &tax {
        intensity.push((region.clone(), data.years.clone(), extract_carbon_intensity(&data.zero_tax_emissions, &data.zero_tax_output)?));
        let times: Vec<f64> = data.years.iter().map(|y| (y - BASE_YEAR) as f64).collect();
        let fit = fit_abatement(&data.runs, &data.zero_tax_emissions, &times)?;
        if fit.b4_at_bound {
            flags.push(format!("{region}: abatement b4 at bound {}", fit.params.b4));
        }
        abatement.push((region.clone(), fit));
    }

    let mut regions: BTreeMap<String, FittedRegion> = BTreeMap::new();
    for (name, fit) in &growth {
        let names = ["g0", "d", "pi1", "pi2"];
        for (flag, what) in fit.at_bound.iter().zip(names) {
            if *flag {
                flags.push(format!("{name}: {what} at bound"));
            }
        }
        let r = regions.entry(name.clone()).or_insert_with(|| blank(name));
        r.g0 = Some(fit.params.g0);
        r.d = Some(fit.params.d);
        r.damage = Some(fit.params.damage);
    }
    for (name, fit) in &abatement {
        regions.entry(name.clone()).or_insert_with(|| blank(name)).abatement = Some(fit.params);
    }

    let caps = cap_table(ds, &mut flags)?;

    let mut provenance = BTreeMap::from([
        ("source".to_string(), source.to_string()),
        ("generator".to_string(), format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))),
        ("tcre_intercept".to_string(), format!("{}", tcre.intercept)),
        ("tcre_r_squared".to_string(), format!("{}", tcre.r_squared)),
    ]);
    if !flags.is_empty() {
        provenance.insert("flags".to_string(), flags.join("; "));
    }
    let params = ParamsFile { schema_version: SCHEMA_VERSION, zeta: Some(tcre.zeta), regions: regions.into_values().collect(), provenance };

    let sensitivity_params = if ds.kahn.is_empty() { None } else { Some(kahn_variant(ds, &params)?) };
    Ok(CalibrationOutput { params, sensitivity_params, caps, intensity, flags })
}

pub const PARAMS_FILE: &str = "params.toml";
pub const SENSITIVITY_PARAMS_FILE: &str = "params_projected_loss.toml";
pub const CAPS_FILE: &str = "caps.csv";
pub const INTENSITY_FILE: &str = "intensity.csv";

impl CalibrationOutput {
    /// Output files in write order. The cap file has the layout of the
    /// bundled cap table, at full precision.
    pub fn files(&self) -> Vec<(String, Vec<u8>)> {
        let mut out = vec![(PARAMS_FILE.to_string(), self.params.to_toml().into_bytes())];
        if let Some(p) = &self.sensitivity_params {
            out.push((SENSITIVITY_PARAMS_FILE.into(), p.to_toml().into_bytes()));
        }
        let mut caps = String::from("region");
        for y in &self.caps.years {
            caps.push_str(&format!(",{y}"));
        }
        caps.push('\n');
        for (name, vals) in &self.caps.rows {
            caps.push_str(name);
            for v in vals {
                caps.push_str(&format!(",{v}"));
            }
            caps.push('\n');
        }
        out.push((CAPS_FILE.into(), caps.into_bytes()));
        let mut sigma = String::from("region,year,sigma_gtc_per_tusd\n");
        for (region, years, values) in &self.intensity {
            for (y, v) in years.iter().zip(values) {
                sigma.push_str(&format!("{region},{y},{v}\n"));
            }
        }
        out.push((INTENSITY_FILE.into(), sigma.into_bytes()));
        out
    }
}

fn blank(name: &str) -> FittedRegion {
    FittedRegion { name: name.to_string(), abatement: None, damage: None, g0: None, d: None }
}

fn kahn_variant(ds: &CalibrationDataset, base: &ParamsFile) -> Result<ParamsFile, CalibError> {
    let rcp: BTreeMap<(String, i32), f64> = ds.rcp.iter().map(|r| ((r.scenario.clone(), r.year), r.temp_c)).collect();
    let mut out = base.clone();
    let mut regions: Vec<&str> = ds.kahn.iter().map(|r| r.region.as_str()).collect();
    regions.dedup();
    for region in regions {
        let (mut l26, mut l85, mut t26, mut t85) = (vec![], vec![], vec![], vec![]);
        for r in ds.kahn.iter().filter(|r| r.region == region) {
            if let (Some(a), Some(b)) = (rcp.get(&(RCP26.to_string(), r.year)), rcp.get(&(RCP85.to_string(), r.year))) {
                l26.push(r.loss_rcp26);
                l85.push(r.loss_rcp85);
                t26.push(*a);
                t85.push(*b);
            }
        }
        let damage = fit_damage_kahn(&l26, &l85, &t26, &t85)?;
        match out.regions.iter_mut().find(|r| r.name == region) {
            Some(r) => r.damage = Some(damage),
            None => out.regions.push(FittedRegion { damage: Some(damage), ..blank(region) }),
        }
    }
    out.provenance.insert("damage".to_string(), "projected-loss ratio fit".to_string());
    Ok(out)
}

fn cap_table(ds: &CalibrationDataset, flags: &mut Vec<String>) -> Result<CapTable, CalibError> {
    let countries = ds.countries()?;
    let pledges = resolve_pledges(&countries, &BTreeMap::new())?;
    let mut by_region: BTreeMap<&str, Vec<CapPathway>> = BTreeMap::new();
    for (c, row) in countries.iter().zip(&ds.ndc) {
        let pledge = pledges[&c.name];
        let base = match pledge.kind {
            TargetKind::Emissions => row.base_emissions_gtc,
            TargetKind::Intensity => row.base_intensity_gtc_per_tusd,
        };
        let target = pledge_target(&pledge, base, row.gdp_target_tusd);
        let netzero = ds
            .netzero_year(&c.name)
            .ok_or_else(|| CalibError::Schema { file: "netzero.csv".into(), reason: format!("no net-zero year for {}", c.name) })?;
        let path = build_cap_pathway(&ds.country_history(&c.name), pledge.target_year, target, netzero, CAP_YEARS)?;
        if path.clamped {
            flags.push(format!("{}: cap pathway clamped at zero before its target year", c.name));
        }
        by_region.entry(c.region.as_str()).or_default().push(path);
    }
    let rows = by_region
        .into_iter()
        .map(|(region, paths)| Ok((region.to_string(), aggregate(&paths)?.caps)))
        .collect::<Result<Vec<_>, CalibError>>()?;
    Ok(CapTable { years: (0..CAP_YEARS as i32).map(|k| BASE_YEAR + k).collect(), rows })
}
