//! Joint estimation of TFP growth and damage coefficients from projected GDP
//! per capita with and without climate impacts.
//!
//! For a candidate `(g0, d, π1, π2)` two growth models are solved: one without
//! damages and one whose output is divided by `1 + π1 T + π2 T²` along an
//! exogenous temperature path. Initial TFP is set so that damaged 2020 output
//! per capita equals the observed value. The fit minimizes squared deviations
//! of normalized GDP per capita over 80 years (no impacts) and 30 years (with
//! impacts).

use super::growth::{solve_growth, GrowthProblem};
use super::lsq::{multistart, Bounds, LsqOptions};
use super::CalibError;
use crate::model::DamageParams;
use crate::params::GlobalParams;

pub const NOCC_YEARS: usize = 80;
pub const CC_YEARS: usize = 30;
/// Inner growth models run this many years; only the first 80 enter the fit.
pub const INNER_HORIZON: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct TfpDamageData {
    pub region: String,
    /// Billions, at least `INNER_HORIZON + 1` years from 2020.
    pub population: Vec<f64>,
    /// $T.
    pub initial_capital: f64,
    /// Observed 2020 output per capita, $T per billion people.
    pub initial_output_per_capita: f64,
    /// Projected GDP per capita without climate impacts, 80 years.
    pub gdp_nocc: Vec<f64>,
    /// Projected GDP per capita with climate impacts, 30 years.
    pub gdp_cc: Vec<f64>,
    /// Temperature path from 2020; held at its last value beyond its end.
    pub temperature: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfpDamageParams {
    pub g0: f64,
    pub d: f64,
    pub damage: DamageParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfpDamageFit {
    pub params: TfpDamageParams,
    /// `g0, d, π1, π2` on a bound.
    pub at_bound: [bool; 4],
    pub rms_error: f64,
}

/// Model GDP per capita paths `(no impacts, with impacts)` for a candidate.
pub fn simulate_gdp(data: &TfpDamageData, global: &GlobalParams, params: &TfpDamageParams) -> Result<(Vec<f64>, Vec<f64>), CalibError> {
    let h = INNER_HORIZON;
    if data.population.len() <= h || data.temperature.is_empty() {
        return Err(CalibError::InvalidInput(format!("{}: population must cover {} years", data.region, h + 1)));
    }
    let temp = |t: usize| data.temperature[t.min(data.temperature.len() - 1)];
    let dam = &params.damage;
    let factors: Vec<f64> = (0..=h).map(|t| dam.denominator(temp(t))).collect();
    if factors.iter().any(|f| !(*f > 0.0)) {
        return Err(CalibError::InvalidInput("damage denominator not positive on the temperature path".into()));
    }

    let (k0, l0, a) = (data.initial_capital, data.population[0], global.alpha);
    let a0 = data.initial_output_per_capita * factors[0] * l0.powf(a) / k0.powf(a);
    let mut tfp = Vec::with_capacity(h + 1);
    let mut level = a0;
    for t in 0..=h {
        tfp.push(level);
        level *= (params.g0 * (-params.d * t as f64).exp()).exp();
    }

    let base = GrowthProblem {
        beta: global.beta,
        gamma: global.gamma,
        alpha: a,
        delta: global.delta,
        initial_capital: k0,
        tfp,
        population: data.population[..=h].to_vec(),
        output_factor: vec![1.0; h + 1],
    };
    let nocc = solve_growth(&base)?;
    let damaged = GrowthProblem { output_factor: factors.iter().map(|f| 1.0 / f).collect(), ..base };
    let cc = solve_growth(&damaged)?;
    Ok((nocc.output_per_capita, cc.output_per_capita))
}

fn normalized(v: &[f64], n: usize) -> Vec<f64> {
    v[..n].iter().map(|x| x / v[0]).collect()
}

pub fn fit_tfp_damage(data: &TfpDamageData, global: &GlobalParams) -> Result<TfpDamageFit, CalibError> {
    if data.gdp_nocc.len() < NOCC_YEARS || data.gdp_cc.len() < CC_YEARS || data.temperature.len() < CC_YEARS {
        return Err(CalibError::InvalidInput(format!(
            "{}: need {NOCC_YEARS} years without impacts and {CC_YEARS} with impacts and temperature",
            data.region
        )));
    }
    if data.gdp_nocc[0] <= 0.0 || data.gdp_cc[0] <= 0.0 {
        return Err(CalibError::ZeroGdp { index: 0 });
    }
    let target_nocc = normalized(&data.gdp_nocc, NOCC_YEARS);
    let target_cc = normalized(&data.gdp_cc, CC_YEARS);
    let residuals = |p: &[f64]| {
        let params = TfpDamageParams { g0: p[0], d: p[1], damage: DamageParams { pi1: p[2], pi2: p[3] } };
        let (nocc, cc) = simulate_gdp(data, global, &params).ok()?;
        let r = normalized(&nocc, NOCC_YEARS)
            .iter()
            .zip(&target_nocc)
            .chain(normalized(&cc, CC_YEARS).iter().zip(&target_cc))
            .map(|(m, d)| m - d)
            .collect::<Vec<f64>>();
        Some(r)
    };
    let bounds = Bounds::new(vec![-0.02, 0.0, -1.0, -1.0], vec![0.08, 0.1, 1.0, 1.0])?;
    let fit = multistart(&residuals, &[0.01, 0.005, 0.0, 0.0], &bounds, &LsqOptions::default())?;
    let p = &fit.params;
    Ok(TfpDamageFit {
        params: TfpDamageParams { g0: p[0], d: p[1], damage: DamageParams { pi1: p[2], pi2: p[3] } },
        at_bound: [fit.at_bound[0], fit.at_bound[1], fit.at_bound[2], fit.at_bound[3]],
        rms_error: (2.0 * fit.cost / (NOCC_YEARS + CC_YEARS) as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(truth: &TfpDamageParams) -> TfpDamageData {
        let mut d = TfpDamageData {
            region: "US".into(),
            population: (0..=INNER_HORIZON).map(|t| 0.42 + (0.331 - 0.42) * (-0.03 * t as f64).exp()).collect(),
            initial_capital: 52.25,
            initial_output_per_capita: 20.9 / 0.331,
            gdp_nocc: vec![],
            gdp_cc: vec![],
            temperature: (0..80).map(|t| 1.2 + 0.02 * t as f64 - 0.0001 * (t * t) as f64).collect(),
        };
        let (nocc, cc) = simulate_gdp(&d, &GlobalParams::default(), truth).unwrap();
        d.gdp_nocc = nocc[..NOCC_YEARS].to_vec();
        d.gdp_cc = cc[..CC_YEARS].to_vec();
        d
    }

    #[test]
    fn round_trip_recovers_generating_parameters() {
        let truth = TfpDamageParams { g0: 0.0033, d: 0.0011, damage: DamageParams { pi1: 0.0842, pi2: 0.0096 } };
        let fit = fit_tfp_damage(&data(&truth), &GlobalParams::default()).unwrap();
        let p = fit.params;
        for (got, want) in [(p.g0, truth.g0), (p.d, truth.d), (p.damage.pi1, truth.damage.pi1), (p.damage.pi2, truth.damage.pi2)] {
            assert!((got / want - 1.0).abs() < 1e-3, "{p:?}");
        }
    }

    #[test]
    fn no_damage_data_fits_near_zero_damage() {
        let truth = TfpDamageParams { g0: 0.012, d: 0.006, damage: DamageParams { pi1: 0.0, pi2: 0.0 } };
        let fit = fit_tfp_damage(&data(&truth), &GlobalParams::default()).unwrap();
        assert!(fit.params.damage.pi1.abs() < 1e-6 && fit.params.damage.pi2.abs() < 1e-6, "{:?}", fit.params);
    }

    #[test]
    fn short_series_rejected() {
        let truth = TfpDamageParams { g0: 0.01, d: 0.005, damage: DamageParams { pi1: 0.0, pi2: 0.0 } };
        let mut d = data(&truth);
        d.gdp_cc.truncate(10);
        assert!(matches!(fit_tfp_damage(&d, &GlobalParams::default()), Err(CalibError::InvalidInput(_))));
    }
}
