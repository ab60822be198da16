//! Emission cap pathways from historical emissions, near-term pledges and
//! net-zero years.
//!
//! Each country's path is a quadratic fitted by least squares to its 2014-2018
//! emissions and its pledged target, used up to the target year, then a
//! straight line to zero at the net-zero year. Regions sum their countries.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::CalibError;
use crate::params::BASE_YEAR;

pub const HISTORY_START: i32 = 2014;
pub const HISTORY_YEARS: usize = 5;

/// Annual caps starting in the base year.
#[derive(Debug, Clone, PartialEq)]
pub struct CapPathway {
    /// GtC per year from `BASE_YEAR`.
    pub caps: Vec<f64>,
    /// The fitted quadratic went negative before the target year and was
    /// clamped at zero.
    pub clamped: bool,
}

impl CapPathway {
    pub fn at(&self, year: i32) -> Option<f64> {
        usize::try_from(year - BASE_YEAR).ok().and_then(|i| self.caps.get(i).copied())
    }
}

/// `history` holds 2014-2018 emissions; `len` years are produced from 2020.
pub fn build_cap_pathway(history: &[f64], target_year: i32, target: f64, netzero_year: i32, len: usize) -> Result<CapPathway, CalibError> {
    if history.len() != HISTORY_YEARS {
        return Err(CalibError::InvalidInput(format!("need {HISTORY_YEARS} historical years, got {}", history.len())));
    }
    if ![2025, 2030].contains(&target_year) {
        return Err(CalibError::InvalidInput(format!("target year {target_year} is not 2025 or 2030")));
    }
    if netzero_year < target_year {
        return Err(CalibError::InvalidInput(format!("net-zero year {netzero_year} precedes target year {target_year}")));
    }
    if history.iter().chain([&target]).any(|v| !(*v >= 0.0)) {
        return Err(CalibError::InvalidInput("emissions must be nonnegative".into()));
    }

    // Years are centred on 2018 to keep the normal matrix well scaled.
    let origin = (HISTORY_START + HISTORY_YEARS as i32 - 1) as f64;
    let mut xs: Vec<f64> = (0..HISTORY_YEARS).map(|k| (HISTORY_START + k as i32) as f64 - origin).collect();
    xs.push(target_year as f64 - origin);
    let ys: Vec<f64> = history.iter().copied().chain([target]).collect();
    let design = DMatrix::from_fn(xs.len(), 3, |i, j| xs[i].powi(j as i32));
    let coef = design
        .svd(true, true)
        .solve(&DVector::from_vec(ys), 1e-12)
        .map_err(|e| CalibError::DegenerateData(e.to_string()))?;
    let quad = |year: i32| {
        let x = year as f64 - origin;
        coef[0] + coef[1] * x + coef[2] * x * x
    };

    let clamped = (origin as i32..=target_year).any(|y| quad(y) < 0.0);
    let anchor = quad(target_year).max(0.0);
    let caps = (0..len)
        .map(|k| {
            let year = BASE_YEAR + k as i32;
            if year >= netzero_year {
                0.0
            } else if year <= target_year {
                quad(year).max(0.0)
            } else {
                anchor * (netzero_year - year) as f64 / (netzero_year - target_year) as f64
            }
        })
        .collect();
    Ok(CapPathway { caps, clamped })
}

/// Sums country pathways into a regional one.
pub fn aggregate(paths: &[CapPathway]) -> Result<CapPathway, CalibError> {
    let first = paths.first().ok_or_else(|| CalibError::InvalidInput("nothing to aggregate".into()))?;
    if paths.iter().any(|p| p.caps.len() != first.caps.len()) {
        return Err(CalibError::InvalidInput("pathways differ in length".into()));
    }
    let caps = (0..first.caps.len()).map(|t| paths.iter().map(|p| p.caps[t]).sum()).collect();
    Ok(CapPathway { caps, clamped: paths.iter().any(|p| p.clamped) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    /// Reduction of emissions relative to a base-year level.
    Emissions,
    /// Reduction of emissions per unit of output relative to a base year.
    Intensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pledge {
    pub kind: TargetKind,
    pub target_year: i32,
    /// Fractional reduction, e.g. 0.5 for 50%.
    pub reduction: f64,
}

/// Target emissions for a pledge. `base` is base-year emissions (GtC) for an
/// emissions pledge and base-year intensity (GtC per $T) for an intensity
/// pledge; `target_output` is projected output in the target year ($T) and is
/// only used for intensity pledges.
pub fn pledge_target(pledge: &Pledge, base: f64, target_output: f64) -> f64 {
    match pledge.kind {
        TargetKind::Emissions => (1.0 - pledge.reduction) * base,
        TargetKind::Intensity => (1.0 - pledge.reduction) * base * target_output,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Country {
    pub name: String,
    pub region: String,
    /// Billions.
    pub population: f64,
    pub pledge: Option<Pledge>,
}

/// Resolves every country's pledge. Countries without one take the pledge of
/// the country named in `donors`, or else of the most populous pledging
/// country in their region.
pub fn resolve_pledges(countries: &[Country], donors: &BTreeMap<String, String>) -> Result<BTreeMap<String, Pledge>, CalibError> {
    let by_name: BTreeMap<&str, &Country> = countries.iter().map(|c| (c.name.as_str(), c)).collect();
    let mut out = BTreeMap::new();
    for c in countries {
        let pledge = match (c.pledge, donors.get(&c.name)) {
            (Some(p), _) => p,
            (None, Some(donor)) => by_name
                .get(donor.as_str())
                .and_then(|d| d.pledge)
                .ok_or_else(|| CalibError::InvalidInput(format!("{}: donor {donor} has no pledge", c.name)))?,
            (None, None) => countries
                .iter()
                .filter(|d| d.region == c.region && d.pledge.is_some())
                .max_by(|a, b| a.population.total_cmp(&b.population))
                .and_then(|d| d.pledge)
                .ok_or_else(|| CalibError::InvalidInput(format!("{}: no pledging country in {}", c.name, c.region)))?,
        };
        out.insert(c.name.clone(), pledge);
    }
    Ok(out)
}
