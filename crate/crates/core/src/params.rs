//! Global and regional parameter records plus the bundled parameter tables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AbatementParams, DamageParams, TERMINAL_CONSUMPTION_SHARE};

/// The twelve aggregated regions, in the canonical reporting order.
pub const REGIONS: [&str; 12] = [
    "US", "EU", "Japan", "Russia", "Eurasia", "China", "India", "MidEast", "Africa", "LatAm", "OHI", "OthAs",
];

/// Calendar year of `t = 0`.
pub const BASE_YEAR: i32 = 2020;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("invalid global parameter {name}: {value}")]
    Global { name: &'static str, value: f64 },
    #[error("region {region}: {reason}")]
    Region { region: String, reason: String },
    #[error("bundled table {table}: {reason}")]
    Table { table: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams {
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub delta: f64,
    pub zeta: f64,
    pub horizon: usize,
    pub consumption_share_terminal: f64,
    /// Temperature anomaly in 2020 (°C); fixes the initial cumulative emissions.
    pub initial_temperature: f64,
}

impl Default for GlobalParams {
    fn default() -> Self {
        Self {
            beta: 0.985,
            gamma: 1.45,
            alpha: 0.3,
            delta: 0.1,
            zeta: 0.0021,
            horizon: 300,
            consumption_share_terminal: TERMINAL_CONSUMPTION_SHARE,
            initial_temperature: 1.2,
        }
    }
}

impl GlobalParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let bad = |name, value| Err(ParamError::Global { name, value });
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta", self.beta);
        }
        if !(self.gamma > 0.0) || (self.gamma - 1.0).abs() < 1e-12 {
            return bad("gamma", self.gamma);
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", self.alpha);
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return bad("delta", self.delta);
        }
        if !(self.zeta > 0.0) {
            return bad("zeta", self.zeta);
        }
        if self.horizon < 2 {
            return bad("horizon", self.horizon as f64);
        }
        if !(self.consumption_share_terminal > 0.0 && self.consumption_share_terminal <= 1.0) {
            return bad("consumption_share_terminal", self.consumption_share_terminal);
        }
        Ok(())
    }

    /// Cumulative emissions in 2020 implied by the initial temperature.
    pub fn initial_cum_emissions(&self) -> f64 {
        self.initial_temperature / self.zeta
    }
}

/// TFP growth parameters: `g_t = g0·exp(−d·t)` within the century, `A_0 = a0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfpParams {
    pub g0: f64,
    pub d: f64,
    pub a0: f64,
}

/// Everything one region needs: calibrated constants and exogenous annual paths.
///
/// Paths are indexed by `t` with `t = 0` in 2020. `population` and `tfp` must
/// cover `horizon + 1` years (the terminal year included); `intensity` and
/// `caps` must cover `horizon` years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub name: String,
    pub abatement: AbatementParams,
    pub damage: DamageParams,
    pub tfp_params: TfpParams,
    pub initial_capital: f64,
    pub population: Vec<f64>,
    pub intensity: Vec<f64>,
    pub caps: Vec<f64>,
    pub tfp: Vec<f64>,
}

impl RegionParams {
    pub fn validate(&self, horizon: usize) -> Result<(), ParamError> {
        let err = |reason: String| Err(ParamError::Region { region: self.name.clone(), reason });
        let a = &self.abatement;
        if !(a.b1 >= 0.0 && a.b2 > 2.0 && a.b3 >= 0.0 && a.b4 >= 0.0) {
            return err(format!("abatement coefficients out of range: {a:?}"));
        }
        if !(self.initial_capital > 0.0) {
            return err(format!("initial capital {} must be positive", self.initial_capital));
        }
        for (label, path, len) in [
            ("population", &self.population, horizon + 1),
            ("tfp", &self.tfp, horizon + 1),
            ("intensity", &self.intensity, horizon),
            ("caps", &self.caps, horizon),
        ] {
            if path.len() < len {
                return err(format!("{label} path has {} entries, need {len}", path.len()));
            }
        }
        if let Some(t) = self.population.iter().position(|&l| !(l > 0.0)) {
            return err(format!("population not positive at t={t}"));
        }
        if let Some(t) = self.intensity.iter().position(|&s| !(s > 0.0)) {
            return err(format!("carbon intensity not positive at t={t}"));
        }
        if let Some(t) = self.tfp.iter().position(|&s| !(s > 0.0)) {
            return err(format!("tfp not positive at t={t}"));
        }
        if let Some(t) = self.caps.iter().position(|&c| !(c >= 0.0)) {
            return err(format!("negative or missing cap at t={t}"));
        }
        Ok(())
    }
}

/// TFP path `A_{t+1} = A_t·exp(g_t)` from a growth-rate path.
pub fn tfp_path(a0: f64, growth: &[f64], len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut a = a0;
    for t in 0..len {
        out.push(a);
        let g = growth.get(t).copied().or_else(|| growth.last().copied()).unwrap_or(0.0);
        a *= g.exp();
    }
    out
}

/// In-century TFP growth `g0·exp(−d·t)`.
pub fn tfp_growth_in_century(tfp: &TfpParams, t: usize) -> f64 {
    tfp.g0 * (-tfp.d * t as f64).exp()
}

/// Calibrated parameter tables shipped with the crate.
pub mod tables {
    use super::*;

    pub const KEY_PARAMS_CSV: &str = include_str!("../data/key_params.csv");
    pub const ABATEMENT_CSV: &str = include_str!("../data/abatement.csv");
    pub const DAMAGE_CSV: &str = include_str!("../data/damage.csv");
    pub const TFP_CSV: &str = include_str!("../data/tfp.csv");
    pub const CAPS_CSV: &str = include_str!("../data/caps.csv");

    #[derive(Debug, Clone, PartialEq)]
    pub struct KeyParam {
        pub name: String,
        pub value: f64,
        pub description: String,
    }

    /// Five-yearly baseline caps, one row per region.
    #[derive(Debug, Clone, PartialEq)]
    pub struct CapTable {
        pub years: Vec<i32>,
        pub rows: Vec<(String, Vec<f64>)>,
    }

    fn records(table: &'static str, text: &str) -> Result<(Vec<String>, Vec<Vec<String>>), ParamError> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| ParamError::Table { table, reason: e.to_string() })?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| ParamError::Table { table, reason: e.to_string() })?;
            rows.push(rec.iter().map(str::to_owned).collect());
        }
        Ok((headers, rows))
    }

    fn num(table: &'static str, s: &str) -> Result<f64, ParamError> {
        s.trim().parse().map_err(|_| ParamError::Table { table, reason: format!("not a number: {s:?}") })
    }

    pub fn key_params() -> Result<Vec<KeyParam>, ParamError> {
        let (_, rows) = records("key_params", KEY_PARAMS_CSV)?;
        rows.iter()
            .map(|r| Ok(KeyParam { name: r[0].clone(), value: num("key_params", &r[1])?, description: r[2].clone() }))
            .collect()
    }

    pub fn abatement() -> Result<Vec<(String, AbatementParams)>, ParamError> {
        let (_, rows) = records("abatement", ABATEMENT_CSV)?;
        rows.iter()
            .map(|r| {
                Ok((
                    r[0].clone(),
                    AbatementParams { b1: num("abatement", &r[1])?, b2: num("abatement", &r[2])?, b3: num("abatement", &r[3])?, b4: num("abatement", &r[4])? },
                ))
            })
            .collect()
    }

    pub fn damage() -> Result<Vec<(String, DamageParams)>, ParamError> {
        let (_, rows) = records("damage", DAMAGE_CSV)?;
        rows.iter()
            .map(|r| Ok((r[0].clone(), DamageParams { pi1: num("damage", &r[1])?, pi2: num("damage", &r[2])? })))
            .collect()
    }

    /// `(region, g0, d)`
    pub fn tfp() -> Result<Vec<(String, f64, f64)>, ParamError> {
        let (_, rows) = records("tfp", TFP_CSV)?;
        rows.iter().map(|r| Ok((r[0].clone(), num("tfp", &r[1])?, num("tfp", &r[2])?))).collect()
    }

    pub fn caps() -> Result<CapTable, ParamError> {
        parse_caps(CAPS_CSV)
    }

    /// Parses a cap table: `region` then one column per year.
    pub fn parse_caps(text: &str) -> Result<CapTable, ParamError> {
        let (headers, rows) = records("caps", text)?;
        if headers.len() < 2 || rows.is_empty() {
            return Err(ParamError::Table { table: "caps", reason: "no year columns or no rows".into() });
        }
        let years = headers[1..]
            .iter()
            .map(|h| h.parse().map_err(|_| ParamError::Table { table: "caps", reason: format!("bad year {h}") }))
            .collect::<Result<Vec<i32>, _>>()?;
        let rows = rows
            .iter()
            .map(|r| Ok((r[0].clone(), r[1..].iter().map(|v| num("caps", v)).collect::<Result<Vec<_>, _>>()?)))
            .collect::<Result<Vec<_>, ParamError>>()?;
        Ok(CapTable { years, rows })
    }

    /// Re-emits each table from parsed values, in the same layout as the shipped files.
    pub fn emit_key_params(rows: &[KeyParam]) -> String {
        let mut s = String::from("parameter,value,description\n");
        for r in rows {
            s.push_str(&format!("{},{},{}\n", r.name, r.value, r.description));
        }
        s
    }

    pub fn emit_abatement(rows: &[(String, AbatementParams)]) -> String {
        let mut s = String::from("region,b1,b2,b3,b4\n");
        for (name, a) in rows {
            s.push_str(&format!("{name},{:.3},{:.3},{:.3},{}\n", a.b1, a.b2, a.b3, a.b4));
        }
        s
    }

    pub fn emit_damage(rows: &[(String, DamageParams)]) -> String {
        let mut s = String::from("region,pi1,pi2\n");
        for (name, d) in rows {
            s.push_str(&format!("{name},{:.4},{:.4}\n", d.pi1, d.pi2));
        }
        s
    }

    pub fn emit_tfp(rows: &[(String, f64, f64)]) -> String {
        let mut s = String::from("region,g0,d\n");
        for (name, g0, d) in rows {
            s.push_str(&format!("{name},{g0:.4},{d:.4}\n"));
        }
        s
    }

    pub fn emit_caps(table: &CapTable) -> String {
        let mut s = String::from("region");
        for y in &table.years {
            s.push_str(&format!(",{y}"));
        }
        s.push('\n');
        for (name, vals) in &table.rows {
            s.push_str(name);
            for v in vals {
                s.push_str(&format!(",{v:.3}"));
            }
            s.push('\n');
        }
        s
    }

    /// Linear interpolation of five-yearly caps onto an annual grid starting in
    /// 2020; zero after the last tabulated year.
    pub fn annual_caps(years: &[i32], values: &[f64], len: usize) -> Vec<f64> {
        (0..len)
            .map(|t| {
                let year = BASE_YEAR as f64 + t as f64;
                let last = *years.last().unwrap() as f64;
                if year >= last {
                    return *values.last().unwrap();
                }
                let k = years.iter().rposition(|&y| y as f64 <= year).unwrap_or(0);
                let (y0, y1) = (years[k] as f64, years[k + 1] as f64);
                let w = (year - y0) / (y1 - y0);
                values[k] * (1.0 - w) + values[k + 1] * w
            })
            .collect()
    }
}
