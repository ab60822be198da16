//! Open-loop Nash equilibrium with a clearing permit market.
//!
//! Each iteration solves every region against the current prices and the
//! other regions' damped emissions (all against the same iterate), then
//! moves prices multiplicatively with net permit demand and damps emissions
//! toward the best responses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::region::{policy_welfare, solve_region_from, RegionError, RegionProblem, RegionSolution, SolverOptions, WarmStart};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NashConfig {
    pub omega: f64,
    /// Lower bound on prices during iteration, $T/GtC.
    pub price_floor: f64,
    pub max_iterations: usize,
    pub price_tol: f64,
    pub emission_tol: f64,
    /// GtC.
    pub clearing_tol: f64,
    /// Flat starting price, $T/GtC; ignored when a path is given.
    pub initial_price: f64,
    /// Halve `omega` when the clearing error grows for several iterations.
    #[serde(default)]
    pub adaptive_omega: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_price_path: Option<Vec<f64>>,
    /// Per region, per year; defaults to the caps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_emissions: Option<Vec<Vec<f64>>>,
}

impl Default for NashConfig {
    fn default() -> Self {
        Self {
            omega: 0.1,
            price_floor: 1e-6,
            max_iterations: 2000,
            price_tol: 1e-4,
            emission_tol: 1e-4,
            clearing_tol: 1e-4,
            initial_price: 0.1,
            adaptive_omega: false,
            initial_price_path: None,
            initial_emissions: None,
        }
    }
}

impl NashConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(format!("omega {} must lie in (0, 1]", self.omega));
        }
        if !(self.price_floor > 0.0) {
            return Err("price_floor must be positive".into());
        }
        if !(self.price_tol > 0.0 && self.emission_tol > 0.0 && self.clearing_tol > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if self.max_iterations == 0 {
            return Err("max_iterations must be positive".into());
        }
        let initial_ok = match &self.initial_price_path {
            Some(p) => p.iter().all(|&m| m >= self.price_floor),
            None => self.initial_price >= self.price_floor,
        };
        if !initial_ok {
            return Err("initial prices must be at least the price floor".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum NashError {
    #[error("no equilibrium after {iterations} iterations")]
    NotConverged { iterations: usize, last: Box<EquilibriumSolution> },
    #[error("region {region} infeasible in year {year}")]
    RegionalInfeasibility { region: String, year: i32 },
    #[error("region solve failed: {0}")]
    Region(RegionError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub max_dprice: f64,
    pub max_demission: f64,
    pub max_imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionResult {
    pub name: String,
    pub solution: RegionSolution,
    /// Others' emissions the final solve was made against.
    pub other_emissions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub scenario: Scenario,
    pub regions: Vec<RegionResult>,
    /// $T/GtC; zero where the market has excess supply.
    pub prices: Vec<f64>,
    /// Length `H + 1`.
    pub cum_emissions: Vec<f64>,
    /// Length `H + 1`.
    pub temperature: Vec<f64>,
    /// `Σ_i E^P_{i,t}`.
    pub imbalance: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<HistoryRow>,
}

impl EquilibriumSolution {
    pub fn horizon(&self) -> usize {
        self.prices.len()
    }

    pub fn region(&self, name: &str) -> Option<&RegionResult> {
        self.regions.iter().find(|r| r.name == name)
    }
}

/// Multiplicative price step, floored.
pub fn update_price(m_prev: f64, net_demand: f64, omega: f64, floor: f64) -> f64 {
    (m_prev * (omega * net_demand).exp()).max(floor)
}

/// Price as reported: snapped to zero under persistent excess supply near the floor.
pub fn reported_price(m: f64, net_demand: f64, floor: f64) -> f64 {
    if m < 10.0 * floor && net_demand <= 0.0 {
        0.0
    } else {
        m
    }
}

pub fn update_emissions(best: &[f64], prev: &[f64], omega: f64) -> Vec<f64> {
    best.iter().zip(prev).map(|(b, p)| omega * b + (1.0 - omega) * p).collect()
}

/// Convergence history as CSV.
pub fn convergence_report(history: &[HistoryRow]) -> Result<String, String> {
    if history.is_empty() {
        return Err("empty convergence history".into());
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "max_dprice", "max_demission", "max_imbalance"]).map_err(|e| e.to_string())?;
    for r in history {
        w.write_record([
            r.iteration.to_string(),
            format!("{:e}", r.max_dprice),
            format!("{:e}", r.max_demission),
            format!("{:e}", r.max_imbalance),
        ])
        .map_err(|e| e.to_string())?;
    }
    String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn others(emissions: &[Vec<f64>], i: usize, h: usize) -> Vec<f64> {
    (0..h).map(|t| emissions.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, e)| e[t]).sum()).collect()
}

fn problem(scenario: &Scenario, i: usize, prices: &[f64], other: Vec<f64>) -> RegionProblem {
    RegionProblem {
        region: scenario.regions[i].clone(),
        global: scenario.global.clone(),
        prices: prices.to_vec(),
        other_emissions: other,
        initial_capital: scenario.regions[i].initial_capital,
        initial_cum_emissions: scenario.initial_cum_emissions(),
        trading: scenario.ets_enabled,
    }
}

fn map_region_error(e: RegionError) -> NashError {
    match e {
        RegionError::Infeasible { region, year } => {
            NashError::RegionalInfeasibility { region, year: crate::params::BASE_YEAR + year as i32 }
        }
        other => NashError::Region(other),
    }
}

/// Solves all regions in parallel; results come back in region order.
fn best_responses(
    scenario: &Scenario,
    prices: &[f64],
    emissions: &[Vec<f64>],
    warm: &[Option<WarmStart>],
    solver: &SolverOptions,
) -> Result<Vec<(RegionSolution, Vec<f64>)>, NashError> {
    let h = scenario.global.horizon;
    (0..scenario.regions.len())
        .into_par_iter()
        .map(|i| {
            let other = others(emissions, i, h);
            let p = problem(scenario, i, prices, other.clone());
            match solve_region_from(&p, solver, warm[i].as_ref()) {
                Ok(s) => Ok((s, other)),
                // Mid-iteration, the best iterate is good enough to move prices.
                Err(RegionError::MaxIterations { best, .. }) => Ok((*best, other)),
                Err(e) => Err(map_region_error(e)),
            }
        })
        .collect()
}

fn net_demand(sols: &[(RegionSolution, Vec<f64>)], h: usize) -> Vec<f64> {
    (0..h).map(|t| sols.iter().map(|(s, _)| s.trajectory.permit_purchase[t]).sum()).collect()
}

/// Runs the tatonnement until prices, emissions and clearing are within tolerance.
pub fn solve_nash(scenario: &Scenario, config: &NashConfig, solver: &SolverOptions) -> Result<EquilibriumSolution, NashError> {
    config.validate().map_err(NashError::Invalid)?;
    let h = scenario.global.horizon;
    let n = scenario.regions.len();
    if n == 0 {
        return Err(NashError::Invalid("scenario has no regions".into()));
    }
    let trading = scenario.ets_enabled;
    let mut prices: Vec<f64> = match &config.initial_price_path {
        Some(p) if p.len() >= h => p[..h].to_vec(),
        Some(p) => return Err(NashError::Invalid(format!("initial price path has {} years, need {h}", p.len()))),
        None => vec![config.initial_price; h],
    };
    if !trading {
        prices = vec![0.0; h];
    }
    let mut emissions: Vec<Vec<f64>> = match &config.initial_emissions {
        Some(e) if e.len() == n && e.iter().all(|r| r.len() >= h) => e.iter().map(|r| r[..h].to_vec()).collect(),
        Some(_) => return Err(NashError::Invalid("initial emissions do not cover every region and year".into())),
        None => scenario.regions.iter().map(|r| r.caps[..h].to_vec()).collect(),
    };
    let mut warm: Vec<Option<WarmStart>> = vec![None; n];
    let mut omega = config.omega;
    let mut history = Vec::new();
    let mut growing = 0;
    let mut converged = false;

    for iteration in 1..=config.max_iterations {
        let sols = best_responses(scenario, &prices, &emissions, &warm, solver)?;
        let net = net_demand(&sols, h);

        let mut max_dprice: f64 = 0.0;
        let mut max_imbalance: f64 = 0.0;
        let mut next_prices = prices.clone();
        if trading {
            for t in 0..h {
                next_prices[t] = update_price(prices[t], net[t], omega, config.price_floor);
                max_dprice = max_dprice.max((next_prices[t] - prices[t]).abs() / prices[t].max(config.price_floor));
                let at_floor = prices[t] < 10.0 * config.price_floor;
                max_imbalance = max_imbalance.max(if at_floor { net[t].max(0.0) } else { net[t].abs() });
            }
        }
        let mut max_demission: f64 = 0.0;
        let mut next_emissions = Vec::with_capacity(n);
        for (i, (s, _)) in sols.iter().enumerate() {
            let e = update_emissions(&s.trajectory.emissions, &emissions[i], omega);
            for t in 0..h {
                max_demission = max_demission.max((e[t] - emissions[i][t]).abs() / emissions[i][t].abs().max(0.01));
            }
            next_emissions.push(e);
        }
        if let Some(last) = history.last() {
            let last: &HistoryRow = last;
            growing = if max_imbalance > last.max_imbalance { growing + 1 } else { 0 };
        }
        history.push(HistoryRow { iteration, max_dprice, max_demission, max_imbalance });
        warm = sols.iter().map(|(s, _)| Some(WarmStart::from(s))).collect();

        if max_dprice < config.price_tol && max_demission < config.emission_tol && max_imbalance < config.clearing_tol {
            converged = true;
            break;
        }
        prices = next_prices;
        emissions = next_emissions;
        if config.adaptive_omega && growing >= 5 {
            omega = (omega * 0.5).max(config.omega / 16.0);
            growing = 0;
        }
    }

    // Final pass at the reported prices against the last emission iterate.
    let iterations = history.len();
    let prev_net = {
        let sols = best_responses(scenario, &prices, &emissions, &warm, solver)?;
        warm = sols.iter().map(|(s, _)| Some(WarmStart::from(s))).collect();
        net_demand(&sols, h)
    };
    let reported: Vec<f64> = if trading {
        (0..h).map(|t| reported_price(prices[t], prev_net[t], config.price_floor)).collect()
    } else {
        vec![0.0; h]
    };
    let h_n = h;
    let finals: Vec<Result<(RegionSolution, Vec<f64>), RegionError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let other = others(&emissions, i, h_n);
            let p = problem(scenario, i, &reported, other.clone());
            solve_region_from(&p, solver, warm[i].as_ref()).map(|s| (s, other))
        })
        .collect();
    let mut all_regions_converged = true;
    let mut finals_ok = Vec::with_capacity(n);
    for f in finals {
        match f {
            Ok(x) => finals_ok.push(x),
            Err(RegionError::MaxIterations { best, region, .. }) => {
                all_regions_converged = false;
                let i = scenario.regions.iter().position(|r| r.name == region).unwrap_or(finals_ok.len());
                finals_ok.push((*best, others(&emissions, i, h)));
            }
            Err(e) => return Err(map_region_error(e)),
        }
    }

    let mut solution = assemble(scenario, finals_ok, reported, iterations, converged && all_regions_converged, history);
    settle_zero_price_trades(&mut solution);
    if solution.converged {
        Ok(solution)
    } else {
        Err(NashError::NotConverged { iterations, last: Box::new(solution) })
    }
}

fn assemble(
    scenario: &Scenario,
    finals: Vec<(RegionSolution, Vec<f64>)>,
    prices: Vec<f64>,
    iterations: usize,
    converged: bool,
    history: Vec<HistoryRow>,
) -> EquilibriumSolution {
    let h = scenario.global.horizon;
    let mut cum = vec![scenario.initial_cum_emissions(); h + 1];
    for t in 0..h {
        let e: f64 = finals.iter().map(|(s, _)| s.trajectory.emissions[t]).sum();
        cum[t + 1] = cum[t] + e;
    }
    let temperature = cum.iter().map(|c| scenario.global.zeta * c).collect();
    let regions = scenario
        .regions
        .iter()
        .zip(finals)
        .map(|(r, (solution, other_emissions))| RegionResult { name: r.name.clone(), solution, other_emissions })
        .collect();
    let mut eq = EquilibriumSolution {
        scenario: scenario.clone(),
        regions,
        prices,
        cum_emissions: cum,
        temperature,
        imbalance: vec![0.0; h],
        iterations,
        converged,
        history,
    };
    eq.imbalance = (0..h).map(|t| eq.regions.iter().map(|r| r.solution.trajectory.permit_purchase[t]).sum()).collect();
    eq
}

/// At zero price, buyers take only what they need and sellers supply it pro
/// rata to their slack, so reported trades balance.
fn settle_zero_price_trades(eq: &mut EquilibriumSolution) {
    if !eq.scenario.ets_enabled {
        return;
    }
    for t in 0..eq.horizon() {
        if eq.prices[t] > 0.0 {
            continue;
        }
        let caps: Vec<f64> = eq.scenario.regions.iter().map(|r| r.caps[t]).collect();
        let em: Vec<f64> = eq.regions.iter().map(|r| r.solution.trajectory.emissions[t]).collect();
        let bought: f64 = em.iter().zip(&caps).map(|(e, c)| (e - c).max(0.0)).sum();
        let slack: f64 = em.iter().zip(&caps).map(|(e, c)| (c - e).max(0.0)).sum();
        for (i, r) in eq.regions.iter_mut().enumerate() {
            let need = em[i] - caps[i];
            r.solution.trajectory.permit_purchase[t] = if need >= 0.0 {
                need
            } else if slack > 0.0 {
                -bought.min(slack) * (-need) / slack
            } else {
                0.0
            };
        }
        eq.imbalance[t] = eq.regions.iter().map(|r| r.solution.trajectory.permit_purchase[t]).sum();
    }
}

/// Welfare gain region `i` could obtain by re-optimizing against the
/// equilibrium prices and the other regions' equilibrium emissions,
/// relative to the magnitude of its welfare.
pub fn deviation_gain(eq: &EquilibriumSolution, i: usize, solver: &SolverOptions) -> Result<f64, NashError> {
    let h = eq.horizon();
    let emissions: Vec<Vec<f64>> = eq.regions.iter().map(|r| r.solution.trajectory.emissions.clone()).collect();
    let p = problem(&eq.scenario, i, &eq.prices, others(&emissions, i, h));
    let own = &eq.regions[i].solution.trajectory;
    let stay = policy_welfare(&p, &own.mu, &own.capital)
        .ok_or_else(|| NashError::Invalid(format!("equilibrium policy of {} infeasible on re-evaluation", eq.regions[i].name)))?;
    let warm = WarmStart::from(&eq.regions[i].solution);
    let best = solve_region_from(&p, solver, Some(&warm)).map_err(map_region_error)?;
    Ok((best.welfare - stay) / stay.abs())
}
