//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::Path;

use ets_nash::nash::{solve_nash, EquilibriumSolution};
use ets_nash::scenario::{Scenario, ScenarioConfig};

/// Independent re-derivations of the model equations, written in log/exp
/// form or expanded so they share no code path with the crate.
pub mod oracle {
    pub fn gross_output(a: f64, k: f64, l: f64, alpha: f64) -> f64 {
        (a.ln() + alpha * k.ln() + (1.0 - alpha) * l.ln()).exp()
    }

    pub fn damage_denominator(pi1: f64, pi2: f64, temp: f64) -> f64 {
        1.0 + temp * (pi1 + temp * pi2)
    }

    pub fn net_output(q: f64, pi1: f64, pi2: f64, temp: f64) -> f64 {
        q * damage_denominator(pi1, pi2, temp).recip()
    }

    pub fn net_emissions(mu: f64, sigma: f64, q: f64) -> f64 {
        sigma * q - mu * sigma * q
    }

    pub fn temperature(cum: f64, zeta: f64) -> f64 {
        cum * zeta
    }

    pub fn abatement_cost(mu: f64, q: f64, sigma: f64, b: [f64; 4], t: f64) -> f64 {
        let level = b[0] + b[2] / (b[3] * t).exp();
        level * sigma * q * (b[1] * mu.ln()).exp()
    }

    pub fn mac_usd(mu: f64, b: [f64; 4], t: f64) -> f64 {
        let level = b[0] + b[2] / (b[3] * t).exp();
        1000.0 * b[1] * level * ((b[1] - 1.0) * mu.ln()).exp()
    }

    pub fn consumption(y: f64, inv: f64, cost: f64, price: f64, purchase: f64, l: f64) -> f64 {
        (y - (inv + cost + price * purchase)) / l
    }

    pub fn step_capital(k: f64, inv: f64, delta: f64) -> f64 {
        k - delta * k + inv
    }

    pub fn utility(c: f64, gamma: f64) -> f64 {
        ((1.0 - gamma) * c.ln()).exp() / (1.0 - gamma)
    }

    pub fn marginal_utility(c: f64, gamma: f64) -> f64 {
        (-gamma * c.ln()).exp()
    }

    pub fn terminal_value(y: f64, l: f64, gamma: f64, beta: f64) -> f64 {
        // Geometric series of a constant per-period term.
        l * utility(0.75 * y / l, gamma) * (1.0 / (1.0 - beta))
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn build(cfg: &ScenarioConfig) -> Scenario {
    cfg.build(Path::new(".")).expect("scenario builds")
}

pub fn toy(h: usize, ets: bool) -> (ScenarioConfig, Scenario) {
    let mut cfg = ScenarioConfig::toy(h);
    cfg.ets_enabled = ets;
    let s = build(&cfg);
    (cfg, s)
}

pub fn calibrated(cap_scenario: &str, ets: bool) -> (ScenarioConfig, Scenario) {
    let mut cfg = ScenarioConfig { cap_scenario: cap_scenario.into(), ets_enabled: ets, ..ScenarioConfig::default() };
    cfg.scenario_name = cap_scenario.into();
    let s = build(&cfg);
    (cfg, s)
}

pub fn solve(cfg: &ScenarioConfig, s: &Scenario) -> EquilibriumSolution {
    solve_nash(s, &cfg.nash, &cfg.solver).unwrap_or_else(|e| panic!("equilibrium: {e}"))
}

pub fn year_index(year: i32) -> usize {
    (year - ets_nash::params::BASE_YEAR) as usize
}
