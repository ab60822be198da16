//! Post-equilibrium analysis: marginal abatement costs, regional social cost
//! of carbon, optimal taxes, endogenous discount rates, the present value of
//! marginal damages, and welfare comparisons between regimes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{mac, marginal_utility, utility, USD_PER_TC};
use crate::nash::{solve_nash, EquilibriumSolution, NashConfig, NashError};
use crate::params::BASE_YEAR;
use crate::region::SolverOptions;
use crate::scenario::Scenario;

/// Largest temperature gap tolerated between the two regimes of a welfare comparison, °C.
pub const TEMPERATURE_MATCH_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("region {0}: multipliers missing or incomplete")]
    MissingMultipliers(String),
    #[error("nonpositive consumption at t={0}")]
    NonpositiveConsumption(usize),
    #[error("compensating variation not bracketed")]
    Unbracketed,
    #[error("temperature paths differ by {0:.3e} °C; compare runs under the same emission path")]
    TemperatureMismatch(f64),
    #[error("solutions are not on a common grid: {0}")]
    GridMismatch(String),
    #[error("unknown region {0}")]
    UnknownRegion(String),
    #[error(transparent)]
    Nash(#[from] NashError),
}

/// Marginal abatement cost path, USD/tC.
pub fn mac_path(eq: &EquilibriumSolution, i: usize) -> Vec<f64> {
    let r = &eq.scenario.regions[i];
    eq.regions[i].solution.trajectory.mu.iter().enumerate().map(|(t, &m)| mac(m, &r.abatement, t as f64)).collect()
}

/// Regional SCC, USD/tC: the value of one more ton of cumulative emissions
/// expressed in the region's current consumption.
pub fn scc_path(eq: &EquilibriumSolution, i: usize) -> Result<Vec<f64>, DiagError> {
    let r = &eq.regions[i];
    let m = &r.solution.multipliers;
    let h = eq.horizon();
    if m.cum_emissions.len() != h || m.capital.len() != h || m.capital.iter().any(|&v| !(v > 0.0)) {
        return Err(DiagError::MissingMultipliers(r.name.clone()));
    }
    Ok((0..h).map(|t| -USD_PER_TC * m.cum_emissions[t] / m.capital[t]).collect())
}

/// Optimal tax `max(0, MAC − m)` in USD/tC, with a flag for years where
/// emissions are zero and the formula is only a lower bound.
pub fn optimal_tax_path(eq: &EquilibriumSolution, i: usize) -> Vec<(f64, bool)> {
    let macs = mac_path(eq, i);
    let e = &eq.regions[i].solution.trajectory.emissions;
    macs.iter()
        .zip(&eq.prices)
        .zip(e)
        .map(|((&mac, &m), &e)| ((mac - USD_PER_TC * m).max(0.0), e <= 0.0))
        .collect()
}

/// `r_{t+1} = u'(c_t)/(β·u'(c_{t+1})) − 1`, one entry per consecutive pair.
pub fn discount_rates(consumption: &[f64], gamma: f64, beta: f64) -> Result<Vec<f64>, DiagError> {
    if let Some(t) = consumption.iter().position(|&c| !(c > 0.0)) {
        return Err(DiagError::NonpositiveConsumption(t));
    }
    Ok(consumption.windows(2).map(|w| marginal_utility(w[0], gamma) / (beta * marginal_utility(w[1], gamma)) - 1.0).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvCheck {
    /// Present value of marginal damages of a unit pulse in each year, USD/tC.
    pub pv_damage: Vec<f64>,
    pub scc: Vec<f64>,
    /// `|pv − scc| / max(|scc|, 1)` per year.
    pub gap: Vec<f64>,
    pub max_gap: f64,
}

/// Discounts the stream of marginal damages from a unit emission pulse with
/// the endogenous discount rates (plus the terminal perpetuity) and compares
/// it with the multiplier-based SCC.
pub fn pv_damage_check(eq: &EquilibriumSolution, i: usize) -> Result<PvCheck, DiagError> {
    let scc = scc_path(eq, i)?;
    let g = &eq.scenario.global;
    let r = &eq.scenario.regions[i];
    let tr = &eq.regions[i].solution.trajectory;
    let h = eq.horizon();
    let rates = discount_rates(&tr.consumption, g.gamma, g.beta)?;
    // Marginal damage in year s per GtC of cumulative emissions, $T.
    let md = |s: usize| {
        let d = r.damage.denominator(tr.temperature[s]);
        tr.gross_output[s] * g.zeta * r.damage.denominator_slope(tr.temperature[s]) / (d * d)
    };
    let c_term = g.consumption_share_terminal * tr.net_output[h] / r.population[h];
    let mut pv = vec![0.0; h];
    for t in 0..h {
        let mut factor = 1.0;
        let mut sum = 0.0;
        for s in t + 1..h {
            factor /= 1.0 + rates[s - 1];
            sum += factor * md(s);
        }
        // Terminal perpetuity, priced with the terminal consumption level.
        let term = g.beta.powi((h - t) as i32) / (1.0 - g.beta) * marginal_utility(c_term, g.gamma)
            / marginal_utility(tr.consumption[t], g.gamma)
            * g.consumption_share_terminal
            * md(h);
        pv[t] = USD_PER_TC * (sum + term);
    }
    let gap: Vec<f64> = pv.iter().zip(&scc).map(|(p, s)| (p - s).abs() / s.abs().max(1.0)).collect();
    let max_gap = gap.iter().cloned().fold(0.0, f64::max);
    Ok(PvCheck { pv_damage: pv, scc, gap, max_gap })
}

/// `Σ_{t<H} β^t u(c_t) L_t`.
pub fn period_welfare(c: &[f64], population: &[f64], gamma: f64, beta: f64) -> Result<f64, DiagError> {
    let mut w = 0.0;
    let mut disc = 1.0;
    for (t, (&c, &l)) in c.iter().zip(population).enumerate() {
        w += disc * utility(c, gamma).map_err(|_| DiagError::NonpositiveConsumption(t))? * l;
        disc *= beta;
    }
    Ok(w)
}

/// Uniform per-capita reduction `x` of `c1` such that `W(c1 − x) = W(c0)`,
/// in consumption units, by bisection.
pub fn cv_from_paths(c1: &[f64], c0: &[f64], population: &[f64], gamma: f64, beta: f64) -> Result<f64, DiagError> {
    let target = period_welfare(c0, population, gamma, beta)?;
    let c_min = c1.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(c_min > 0.0) {
        return Err(DiagError::NonpositiveConsumption(0));
    }
    let f = |x: f64| -> f64 {
        let shifted: Vec<f64> = c1.iter().map(|c| c - x).collect();
        period_welfare(&shifted, population, gamma, beta).map(|w| w - target).unwrap_or(f64::NEG_INFINITY)
    };
    let (mut lo, mut hi) = (-0.5 * c_min, 0.5 * c_min);
    let mut expansions = 0;
    while f(lo) < 0.0 {
        lo *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(DiagError::Unbracketed);
        }
    }
    while f(hi) > 0.0 {
        hi = 0.5 * (hi + c_min);
        expansions += 1;
        if expansions > 200 || hi >= c_min {
            return Err(DiagError::Unbracketed);
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * c_min.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareRow {
    pub region: String,
    /// 2020 USD per person.
    pub cv_usd_per_capita: f64,
    /// Percent of 2020 per-capita consumption in the reference regime.
    pub cv_share_pct: f64,
}

/// Compensating variation of the first regime relative to the second.
pub fn compensating_variation(with_ets: &EquilibriumSolution, without: &EquilibriumSolution, region: &str) -> Result<WelfareRow, DiagError> {
    check_grid(&[with_ets, without])?;
    let gap = with_ets
        .temperature
        .iter()
        .zip(&without.temperature)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if gap > TEMPERATURE_MATCH_TOL {
        return Err(DiagError::TemperatureMismatch(gap));
    }
    let i = with_ets.regions.iter().position(|r| r.name == region).ok_or_else(|| DiagError::UnknownRegion(region.into()))?;
    let g = &with_ets.scenario.global;
    let c1 = &with_ets.regions[i].solution.trajectory.consumption;
    let c0 = &without.regions[i].solution.trajectory.consumption;
    let cv = cv_from_paths(c1, c0, &with_ets.scenario.regions[i].population, g.gamma, g.beta)?;
    Ok(WelfareRow { region: region.into(), cv_usd_per_capita: USD_PER_TC * cv, cv_share_pct: 100.0 * cv / c0[0] })
}

/// Result of the adjusted-cap comparison.
#[derive(Debug, Clone)]
pub struct AdjustedComparison {
    /// No-trade solution under the original caps.
    pub original_no_ets: EquilibriumSolution,
    /// No-trade solution re-solved with caps set to its own emissions.
    pub no_ets: EquilibriumSolution,
    /// Trading solution under the same adjusted caps.
    pub ets: EquilibriumSolution,
    pub welfare: Vec<WelfareRow>,
}

/// Solves without trading, sets every region's caps to its optimal
/// emissions, re-solves both regimes under those caps, and computes the CV
/// of trading for each region.
pub fn adjusted_cap_comparison(scenario: &Scenario, nash: &NashConfig, solver: &SolverOptions) -> Result<AdjustedComparison, DiagError> {
    let mut no_trade = scenario.clone();
    no_trade.ets_enabled = false;
    let original = solve_nash(&no_trade, nash, solver)?;
    let caps: Vec<Vec<f64>> = original.regions.iter().map(|r| r.solution.trajectory.emissions.clone()).collect();
    let mut start = nash.clone();
    start.initial_emissions = Some(caps.clone());
    let adjusted = no_trade.with_caps(&caps);
    let no_ets = solve_nash(&adjusted, &start, solver)?;
    let mut with_trade = adjusted.clone();
    with_trade.ets_enabled = true;
    // Start from the emission-weighted mean of each region's shadow permit
    // price without trade. Where no cap binds this is the floor, which avoids
    // approaching a zero price asymptotically.
    let h = scenario.global.horizon;
    let guess = |t: usize| {
        let (num, den) = no_ets.regions.iter().fold((0.0, 0.0), |(num, den), r| {
            let m = &r.solution.multipliers;
            let e = r.solution.trajectory.emissions[t].max(0.0);
            (num + e * m.cap[t] / m.capital[t], den + e)
        });
        if den > 0.0 { (num / den).max(nash.price_floor) } else { nash.price_floor }
    };
    start.initial_price_path = Some((0..h).map(guess).collect());
    let ets = match solve_nash(&with_trade, &start, solver) {
        Err(NashError::NotConverged { last, .. }) => {
            // Clearing prices just above the floor move by a fraction of
            // themselves per step, so approach them from above with full
            // damping (halved on divergence) and a longer budget.
            let floor_band = 10.0 * nash.price_floor;
            let lifted = last
                .prices
                .iter()
                .zip(&last.imbalance)
                .map(|(&m, &net)| if m < floor_band && net > 0.0 { nash.initial_price } else { m.max(nash.price_floor) })
                .collect();
            start.initial_price_path = Some(lifted);
            start.omega = 1.0;
            start.adaptive_omega = true;
            start.max_iterations = 20 * nash.max_iterations;
            start.initial_emissions = Some(last.regions.iter().map(|r| r.solution.trajectory.emissions.clone()).collect());
            solve_nash(&with_trade, &start, solver)?
        }
        other => other?,
    };
    let welfare = ets
        .regions
        .iter()
        .map(|r| compensating_variation(&ets, &no_ets, &r.name))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AdjustedComparison { original_no_ets: original, no_ets, ets, welfare })
}

fn check_grid(solutions: &[&EquilibriumSolution]) -> Result<(), DiagError> {
    let first = solutions[0];
    for s in &solutions[1..] {
        if s.horizon() != first.horizon() {
            return Err(DiagError::GridMismatch(format!("horizons {} and {}", first.horizon(), s.horizon())));
        }
        let a: Vec<&str> = first.regions.iter().map(|r| r.name.as_str()).collect();
        let b: Vec<&str> = s.regions.iter().map(|r| r.name.as_str()).collect();
        if a != b {
            return Err(DiagError::GridMismatch(format!("regions {a:?} and {b:?}")));
        }
    }
    Ok(())
}

/// Per-region, per-year policy quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: String,
    pub mac: Vec<f64>,
    pub scc: Vec<f64>,
    pub optimal_tax: Vec<f64>,
    pub lower_bound_only: Vec<bool>,
    /// Years where the region's cap is zero.
    pub zero_cap: Vec<bool>,
    pub permit_price: Vec<f64>,
    /// `r_{t}` for `t ≥ 1`; the first entry is undefined.
    pub discount_rate: Vec<Option<f64>>,
    pub emissions: Vec<f64>,
    pub permit_purchase: Vec<f64>,
    pub pv_gap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub regions: Vec<RegionReport>,
}

pub fn policy_report(eq: &EquilibriumSolution) -> Result<PolicyReport, DiagError> {
    let g = &eq.scenario.global;
    let mut regions = Vec::new();
    for (i, r) in eq.regions.iter().enumerate() {
        let tr = &r.solution.trajectory;
        let tax = optimal_tax_path(eq, i);
        let pv = pv_damage_check(eq, i)?;
        let mut rates = vec![None];
        rates.extend(discount_rates(&tr.consumption, g.gamma, g.beta)?.into_iter().map(Some));
        regions.push(RegionReport {
            region: r.name.clone(),
            mac: mac_path(eq, i),
            scc: pv.scc.clone(),
            optimal_tax: tax.iter().map(|t| t.0).collect(),
            lower_bound_only: tax.iter().map(|t| t.1).collect(),
            zero_cap: eq.scenario.regions[i].caps.iter().take(eq.horizon()).map(|&c| c == 0.0).collect(),
            permit_price: eq.prices.iter().map(|m| USD_PER_TC * m).collect(),
            discount_rate: rates,
            emissions: tr.emissions.clone(),
            permit_purchase: tr.permit_purchase.clone(),
            pv_gap: pv.gap,
        });
    }
    Ok(PolicyReport { regions })
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Long-format CSV: region, year, variable, value, unit.
pub fn report_csv(report: &PolicyReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["region", "year", "variable", "value", "unit"]).expect("in-memory write");
    for r in &report.regions {
        for t in 0..r.mac.len() {
            let year = (BASE_YEAR + t as i32).to_string();
            let mut row = |var: &str, value: String, unit: &str| {
                w.write_record([r.region.as_str(), year.as_str(), var, value.as_str(), unit]).expect("in-memory write");
            };
            row("mac", fmt(r.mac[t]), "usd_per_tc");
            row("scc", fmt(r.scc[t]), "usd_per_tc");
            row("optimal_tax", fmt(r.optimal_tax[t]), "usd_per_tc");
            row("tax_lower_bound_only", (r.lower_bound_only[t] as u8).to_string(), "flag");
            row("zero_cap", (r.zero_cap[t] as u8).to_string(), "flag");
            row("permit_price", fmt(r.permit_price[t]), "usd_per_tc");
            if let Some(rate) = r.discount_rate[t] {
                row("discount_rate", fmt(rate), "per_year");
            }
            row("emissions", fmt(r.emissions[t]), "gtc");
            row("permit_purchase", fmt(r.permit_purchase[t]), "gtc");
            row("pv_damage_gap", fmt(r.pv_gap[t]), "relative");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf8")
}

pub fn welfare_csv(rows: &[WelfareRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["region", "cv_usd_per_capita", "cv_share_pct"]).expect("in-memory write");
    for r in rows {
        w.write_record([r.region.clone(), fmt(r.cv_usd_per_capita), fmt(r.cv_share_pct)]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf8")
}

/// Aligned comparison tables, one CSV per quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// `(file name, CSV contents)`.
    pub tables: Vec<(String, String)>,
}

/// Builds year-aligned tables of price, temperature, global emissions and
/// per-region MAC and SCC, one column per labelled solution.
pub fn scenario_compare(solutions: &[(String, &EquilibriumSolution)]) -> Result<Comparison, DiagError> {
    if solutions.len() < 2 {
        return Err(DiagError::GridMismatch("need at least two solutions".into()));
    }
    check_grid(&solutions.iter().map(|s| s.1).collect::<Vec<_>>())?;
    let h = solutions[0].1.horizon();
    let labels: Vec<&str> = solutions.iter().map(|s| s.0.as_str()).collect();
    let yearly = |name: &str, f: &dyn Fn(&EquilibriumSolution, usize) -> f64| {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["year".to_string()];
        header.extend(labels.iter().map(|l| l.to_string()));
        w.write_record(&header).expect("in-memory write");
        for t in 0..h {
            let mut row = vec![(BASE_YEAR + t as i32).to_string()];
            row.extend(solutions.iter().map(|(_, s)| fmt(f(s, t))));
            w.write_record(&row).expect("in-memory write");
        }
        (name.to_string(), String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf8"))
    };
    let mut tables = vec![
        yearly("price.csv", &|s, t| USD_PER_TC * s.prices[t]),
        yearly("temperature.csv", &|s, t| s.temperature[t]),
        yearly("global_emissions.csv", &|s, t| s.regions.iter().map(|r| r.solution.trajectory.emissions[t]).sum()),
    ];
    for (file, which) in [("mac.csv", 0), ("scc.csv", 1)] {
        let paths: Vec<Vec<Vec<f64>>> = solutions
            .iter()
            .map(|(_, s)| {
                (0..s.regions.len())
                    .map(|i| if which == 0 { Ok(mac_path(s, i)) } else { scc_path(s, i) })
                    .collect::<Result<Vec<_>, DiagError>>()
            })
            .collect::<Result<_, _>>()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["region".to_string(), "year".to_string()];
        header.extend(labels.iter().map(|l| l.to_string()));
        w.write_record(&header).expect("in-memory write");
        for (i, r) in solutions[0].1.regions.iter().enumerate() {
            for t in 0..h {
                let mut row = vec![r.name.clone(), (BASE_YEAR + t as i32).to_string()];
                row.extend(paths.iter().map(|p| fmt(p[i][t])));
                w.write_record(&row).expect("in-memory write");
            }
        }
        tables.push((file.to_string(), String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf8")));
    }
    Ok(Comparison { tables })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discount_rate_examples() {
        let r = discount_rates(&[1.0, 1.0], 1.45, 0.985).unwrap();
        assert!((r[0] - (1.0 / 0.985 - 1.0)).abs() < 1e-15);
        assert!((r[0] - 0.015228426395939).abs() < 1e-12);
        let r = discount_rates(&[1.0, 1.02], 1.45, 0.985).unwrap();
        assert!((r[0] - 0.044802056).abs() < 1e-8);
        assert!(r[0] > 1.0 / 0.985 - 1.0);
        assert!(discount_rates(&[1.0, 0.0], 1.45, 0.985).is_err());
    }

    #[test]
    fn cv_zero_for_identical_paths() {
        let c = vec![1.0, 1.1, 1.2, 1.3];
        let l = vec![1.0; 4];
        assert!(cv_from_paths(&c, &c, &l, 1.45, 0.985).unwrap().abs() < 1e-14);
    }

    #[test]
    fn cv_uniform_shift_is_exact() {
        let c0: Vec<f64> = (0..50).map(|t| 2.0 + 0.01 * t as f64).collect();
        let c1: Vec<f64> = c0.iter().map(|c| c + 0.001).collect();
        let l: Vec<f64> = (0..50).map(|t| 1.0 + 0.002 * t as f64).collect();
        let cv = cv_from_paths(&c1, &c0, &l, 1.45, 0.985).unwrap();
        assert!((USD_PER_TC * cv - 1.0).abs() < 1e-9, "{}", USD_PER_TC * cv - 1.0);
    }

    #[test]
    fn cv_sign_follows_welfare() {
        let c0 = vec![1.0; 10];
        let worse = vec![0.9; 10];
        let l = vec![1.0; 10];
        assert!(cv_from_paths(&worse, &c0, &l, 1.45, 0.985).unwrap() < 0.0);
    }

    #[test]
    fn period_welfare_beta_zero_is_first_term() {
        let w = period_welfare(&[2.0, 3.0], &[1.5, 1.0], 1.45, 0.0).unwrap();
        assert!((w - 1.5 * utility(2.0, 1.45).unwrap()).abs() < 1e-15);
    }
}
