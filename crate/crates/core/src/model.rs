//! Model equations: emissions, climate, production, damages, abatement cost,
//! budget, capital accumulation and preferences.
//!
//! Units are fixed throughout the crate: emissions in GtC, money in trillion
//! 2020 USD, population in billions, permit prices in $T/GtC. Values shown in
//! USD per ton of carbon are obtained with [`USD_PER_TC`].

use thiserror::Error;

/// Conversion from $T/GtC to USD/tC.
pub const USD_PER_TC: f64 = 1000.0;

/// Share of terminal output consumed in every year past the horizon.
pub const TERMINAL_CONSUMPTION_SHARE: f64 = 0.75;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("emission control rate {0} outside [0, 1]")]
    ControlRateOutOfRange(f64),
    #[error("damage denominator {0} is not positive")]
    NonpositiveDamageDenominator(f64),
    #[error("per-capita consumption {0} is not positive")]
    NonpositiveConsumption(f64),
    #[error("capital {0} is negative")]
    NegativeCapital(f64),
    #[error("population {0} is not positive")]
    NonpositivePopulation(f64),
}

/// Abatement cost coefficients `b1..b4`. `b2` is the exponent of the control rate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AbatementParams {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
}

impl AbatementParams {
    /// Time-varying cost level `b1 + b3·exp(−b4·t)`.
    pub fn level(&self, t: f64) -> f64 {
        self.b1 + self.b3 * (-self.b4 * t).exp()
    }
}

/// Quadratic damage coefficients.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DamageParams {
    pub pi1: f64,
    pub pi2: f64,
}

impl DamageParams {
    /// `1 + π1·T + π2·T²`
    pub fn denominator(&self, temperature: f64) -> f64 {
        1.0 + self.pi1 * temperature + self.pi2 * temperature * temperature
    }

    /// Derivative of the denominator with respect to temperature.
    pub fn denominator_slope(&self, temperature: f64) -> f64 {
        self.pi1 + 2.0 * self.pi2 * temperature
    }
}

pub fn gross_emissions(sigma: f64, gross_output: f64) -> f64 {
    sigma * gross_output
}

pub fn net_emissions(mu: f64, sigma: f64, gross_output: f64) -> Result<f64, ModelError> {
    check_mu(mu)?;
    Ok((1.0 - mu) * sigma * gross_output)
}

/// Temperature anomaly (°C) under the linear cumulative-emissions response.
pub fn temperature(cum_emissions: f64, zeta: f64) -> f64 {
    zeta * cum_emissions
}

/// Cumulative emissions consistent with a given temperature anomaly.
pub fn cum_emissions_for_temperature(temperature: f64, zeta: f64) -> f64 {
    temperature / zeta
}

/// Cobb-Douglas gross output `A·K^α·L^(1−α)`.
pub fn gross_output(tfp: f64, capital: f64, labor: f64, alpha: f64) -> f64 {
    tfp * capital.powf(alpha) * labor.powf(1.0 - alpha)
}

/// Output net of climate damages.
pub fn net_output(gross_output: f64, temperature: f64, damage: &DamageParams) -> Result<f64, ModelError> {
    let denom = damage.denominator(temperature);
    if denom <= 0.0 || !denom.is_finite() {
        return Err(ModelError::NonpositiveDamageDenominator(denom));
    }
    Ok(gross_output / denom)
}

/// Abatement cost `(b1 + b3·e^{−b4 t})·σ·μ^{b2}·Q` in $T.
pub fn abatement_cost(mu: f64, gross_output: f64, sigma: f64, abatement: &AbatementParams, t: f64) -> Result<f64, ModelError> {
    check_mu(mu)?;
    Ok(abatement.level(t) * sigma * mu.powf(abatement.b2) * gross_output)
}

/// Per-capita consumption implied by the budget constraint.
pub fn consumption(
    net_output: f64,
    investment: f64,
    abatement_cost: f64,
    price: f64,
    permit_purchase: f64,
    population: f64,
) -> Result<f64, ModelError> {
    if population <= 0.0 {
        return Err(ModelError::NonpositivePopulation(population));
    }
    let c = (net_output - investment - abatement_cost - price * permit_purchase) / population;
    if c > 0.0 && c.is_finite() {
        Ok(c)
    } else {
        Err(ModelError::NonpositiveConsumption(c))
    }
}

pub fn step_capital(capital: f64, investment: f64, delta: f64) -> Result<f64, ModelError> {
    let next = (1.0 - delta) * capital + investment;
    if next < 0.0 {
        return Err(ModelError::NegativeCapital(next));
    }
    Ok(next)
}

/// Power utility `c^{1−γ}/(1−γ)`.
pub fn utility(c: f64, gamma: f64) -> Result<f64, ModelError> {
    if c <= 0.0 || !c.is_finite() {
        return Err(ModelError::NonpositiveConsumption(c));
    }
    Ok(c.powf(1.0 - gamma) / (1.0 - gamma))
}

/// Marginal utility `c^{−γ}`; caller guarantees `c > 0`.
pub fn marginal_utility(c: f64, gamma: f64) -> f64 {
    c.powf(-gamma)
}

/// Marginal abatement cost in USD/tC:
/// `1000·b2·μ^{b2−1}·(b1 + b3·e^{−b4 t})`.
pub fn mac(mu: f64, abatement: &AbatementParams, t: f64) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    USD_PER_TC * abatement.b2 * mu.powf(abatement.b2 - 1.0) * abatement.level(t)
}

/// Terminal value `u(0.75·Y/L)·L/(1−β)`.
pub fn terminal_value(net_output: f64, population: f64, gamma: f64, beta: f64) -> Result<f64, ModelError> {
    if population <= 0.0 {
        return Err(ModelError::NonpositivePopulation(population));
    }
    let c = TERMINAL_CONSUMPTION_SHARE * net_output / population;
    Ok(utility(c, gamma)? * population / (1.0 - beta))
}

fn check_mu(mu: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&mu) {
        Ok(())
    } else {
        Err(ModelError::ControlRateOutOfRange(mu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const US_ABATEMENT: AbatementParams = AbatementParams { b1: 0.462, b2: 2.859, b3: 9.920, b4: 0.182 };

    #[test]
    fn emissions_examples() {
        assert_eq!(gross_emissions(0.1, 20.0), 2.0);
        assert_eq!(gross_emissions(0.05, 0.0), 0.0);
        assert_relative_eq!(gross_emissions(0.0823, 21.06), 1.733238, max_relative = 1e-12);
        assert_eq!(net_emissions(1.0, 0.3, 7.0).unwrap(), 0.0);
        assert_eq!(net_emissions(0.0, 0.1, 20.0).unwrap(), 2.0);
        assert_relative_eq!(net_emissions(0.25, 0.08, 10.0).unwrap(), 0.6, max_relative = 1e-12);
        assert!(matches!(net_emissions(1.2, 0.1, 1.0), Err(ModelError::ControlRateOutOfRange(_))));
        assert!(net_emissions(-0.1, 0.1, 1.0).is_err());
    }

    #[test]
    fn temperature_examples() {
        assert_relative_eq!(temperature(571.4286, 0.0021), 1.2, max_relative = 1e-6);
        assert_eq!(temperature(0.0, 0.0021), 0.0);
        assert_relative_eq!(temperature(1000.0, 0.0021), 2.1, max_relative = 1e-12);
        assert_relative_eq!(cum_emissions_for_temperature(1.2, 0.0021), 571.428_571_428_571_4, max_relative = 1e-12);
    }

    #[test]
    fn output_examples() {
        assert_eq!(gross_output(3.0, 0.0, 2.0, 0.3), 0.0);
        assert_eq!(gross_output(1.0, 1.0, 1.0, 0.3), 1.0);
        assert_relative_eq!(gross_output(5.0, 100.0, 0.33, 0.3), 9.160_723_232_345_03, max_relative = 1e-12);
    }

    #[test]
    fn damage_examples() {
        let none = DamageParams { pi1: 0.0, pi2: 0.0 };
        assert_eq!(net_output(3.5, 2.0, &none).unwrap(), 3.5);
        let russia = DamageParams { pi1: -0.4169, pi2: 0.3094 };
        // 1 − 0.4169·1.2 + 0.3094·1.44 = 0.945256
        assert_relative_eq!(net_output(1.0, 1.2, &russia).unwrap(), 1.0 / 0.945_256, max_relative = 1e-12);
        assert!(net_output(1.0, 1.2, &russia).unwrap() > 1.0);
        let us = DamageParams { pi1: 0.0842, pi2: 0.0096 };
        assert_relative_eq!(net_output(1.0, 1.2, &us).unwrap(), 0.896_97, max_relative = 1e-5);
        let bad = DamageParams { pi1: -1.0, pi2: 0.0 };
        assert!(matches!(net_output(1.0, 1.5, &bad), Err(ModelError::NonpositiveDamageDenominator(_))));
    }

    #[test]
    fn abatement_and_mac_examples() {
        assert_eq!(abatement_cost(0.0, 10.0, 0.1, &US_ABATEMENT, 0.0).unwrap(), 0.0);
        assert_relative_eq!(abatement_cost(1.0, 10.0, 0.1, &US_ABATEMENT, 0.0).unwrap(), 10.382, max_relative = 1e-12);
        let late = abatement_cost(0.5, 10.0, 0.1, &US_ABATEMENT, 1.0e4).unwrap();
        assert_relative_eq!(late, 0.462 * 0.1 * 0.5f64.powf(2.859) * 10.0, max_relative = 1e-12);

        assert_eq!(mac(0.0, &US_ABATEMENT, 0.0), 0.0);
        assert_relative_eq!(mac(1.0, &US_ABATEMENT, 0.0), 29_682.138, max_relative = 1e-9);
        assert_relative_eq!(mac(1.0, &US_ABATEMENT, 1.0e4), 1000.0 * 2.859 * 0.462, max_relative = 1e-12);
    }

    #[test]
    fn budget_examples() {
        assert_eq!(consumption(2.0, 0.0, 0.0, 0.0, 0.0, 1.0).unwrap(), 2.0);
        assert_relative_eq!(consumption(10.0, 2.0, 0.5, 0.845, 1.0, 0.33).unwrap(), 20.166_666_666_666_67, max_relative = 1e-12);
        assert_relative_eq!(consumption(10.0, 2.0, 0.5, 0.845, -1.0, 0.33).unwrap(), 25.287_878_787_878_79, max_relative = 1e-12);
        assert!(matches!(consumption(1.0, 2.0, 0.0, 0.0, 0.0, 1.0), Err(ModelError::NonpositiveConsumption(_))));
    }

    #[test]
    fn capital_and_utility_examples() {
        assert_eq!(step_capital(100.0, 10.0, 0.1).unwrap(), 100.0);
        assert_eq!(step_capital(100.0, 0.0, 0.1).unwrap(), 90.0);
        assert_relative_eq!(step_capital(50.0, 7.3, 0.1).unwrap(), 52.3, max_relative = 1e-12);
        assert!(matches!(step_capital(10.0, -20.0, 0.1), Err(ModelError::NegativeCapital(_))));

        assert_relative_eq!(utility(1.0, 1.45).unwrap(), -2.222_222_222_222_222, max_relative = 1e-12);
        assert_relative_eq!(utility(4.0, 0.5).unwrap(), 4.0, max_relative = 1e-12);
        assert!(utility(2.0, 1.45).unwrap() > utility(1.0, 1.45).unwrap());
        assert!(utility(0.0, 1.45).is_err());
    }

    #[test]
    fn terminal_value_examples() {
        let v = terminal_value(2.0, 1.0, 1.45, 0.985).unwrap();
        let expected = 1.5f64.powf(-0.45) / -0.45 / (1.0 - 0.985);
        assert_relative_eq!(v, expected, max_relative = 1e-12);
        assert_relative_eq!(v, -123.439_786_127_315_26, max_relative = 1e-12);
        assert!(terminal_value(3.0, 1.0, 1.45, 0.985).unwrap() > v);
    }
}
