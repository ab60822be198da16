mod common;

use common::{oracle, rel_err};
use ets_nash::model::*;
use proptest::prelude::*;

fn abatement() -> impl Strategy<Value = AbatementParams> {
    (0.0..2.0f64, 2.05..4.0f64, 0.0..20.0f64, 0.0..0.2f64).prop_map(|(b1, b2, b3, b4)| AbatementParams { b1: b1 + 0.01, b2, b3, b4 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn production_and_damage_match_oracle(a in 0.1..50.0f64, k in 0.1..500.0f64, l in 0.01..3.0f64, alpha in 0.2..0.4f64,
                                          pi1 in -0.4..0.4f64, pi2 in 0.0..0.3f64, temp in 0.0..4.0f64) {
        let q = gross_output(a, k, l, alpha);
        prop_assert!(rel_err(q, oracle::gross_output(a, k, l, alpha)) < 1e-12);
        let d = DamageParams { pi1, pi2 };
        let denom = oracle::damage_denominator(pi1, pi2, temp);
        prop_assume!(denom > 0.05);
        prop_assert!(rel_err(d.denominator(temp), denom) < 1e-12);
        prop_assert!(rel_err(net_output(q, temp, &d).unwrap(), oracle::net_output(q, pi1, pi2, temp)) < 1e-12);
    }

    #[test]
    fn abatement_cost_and_mac_match_oracle(ab in abatement(), mu in 0.001..1.0f64, q in 0.1..100.0f64,
                                           sigma in 0.01..1.0f64, t in 0.0..300.0f64) {
        let b = [ab.b1, ab.b2, ab.b3, ab.b4];
        prop_assert!(rel_err(abatement_cost(mu, q, sigma, &ab, t).unwrap(), oracle::abatement_cost(mu, q, sigma, b, t)) < 1e-12);
        prop_assert!(rel_err(mac(mu, &ab, t), oracle::mac_usd(mu, b, t)) < 1e-12);
    }

    #[test]
    fn mac_is_derivative_of_cost_per_emission(ab in abatement(), mu in 0.05..0.95f64, t in 0.0..100.0f64) {
        // Cost per unit of gross emissions, in USD/tC, differentiated in μ.
        let h = 1e-5;
        let per = |m: f64| USD_PER_TC * abatement_cost(m, 1.0, 1.0, &ab, t).unwrap();
        let fd = (per(mu + h) - per(mu - h)) / (2.0 * h);
        prop_assert!(rel_err(mac(mu, &ab, t), fd) < 1e-6);
    }

    #[test]
    fn mac_increases_in_control_rate(ab in abatement(), lo in 0.01..0.5f64, gap in 0.01..0.5f64, t in 0.0..100.0f64) {
        prop_assert!(mac(lo + gap, &ab, t) > mac(lo, &ab, t));
    }

    #[test]
    fn emissions_budget_and_capital_match_oracle(mu in 0.0..=1.0f64, sigma in 0.01..1.0f64, q in 0.1..100.0f64,
                                                 inv in 0.0..10.0f64, cost in 0.0..1.0f64, price in 0.0..2.0f64,
                                                 purchase in -1.0..1.0f64, l in 0.05..3.0f64, k in 1.0..300.0f64) {
        prop_assert!(rel_err(net_emissions(mu, sigma, q).unwrap(), oracle::net_emissions(mu, sigma, q)) < 1e-10
            || net_emissions(mu, sigma, q).unwrap().abs() < 1e-12);
        let y = 20.0 + q;
        let c = consumption(y, inv, cost, price, purchase, l).unwrap();
        prop_assert!(rel_err(c, oracle::consumption(y, inv, cost, price, purchase, l)) < 1e-12);
        prop_assert!(rel_err(step_capital(k, inv, 0.1).unwrap(), oracle::step_capital(k, inv, 0.1)) < 1e-12);
    }

    #[test]
    fn preferences_match_oracle(c in 0.01..100.0f64, gamma in 1.05..3.0f64, y in 0.5..100.0f64, l in 0.05..3.0f64,
                                beta in 0.9..0.995f64) {
        prop_assert!(rel_err(utility(c, gamma).unwrap(), oracle::utility(c, gamma)) < 1e-12);
        prop_assert!(rel_err(marginal_utility(c, gamma), oracle::marginal_utility(c, gamma)) < 1e-12);
        prop_assert!(rel_err(terminal_value(y, l, gamma, beta).unwrap(), oracle::terminal_value(y, l, gamma, beta)) < 1e-12);
    }

    #[test]
    fn utility_is_increasing_and_concave(c in 0.01..50.0f64, dc in 0.001..1.0f64, gamma in 1.05..3.0f64) {
        let (u0, u1, u2) = (utility(c, gamma).unwrap(), utility(c + dc, gamma).unwrap(), utility(c + 2.0 * dc, gamma).unwrap());
        prop_assert!(u1 > u0);
        prop_assert!(u2 - u1 < u1 - u0);
    }

    #[test]
    fn temperature_inverts(cum in 0.0..3000.0f64, zeta in 0.001..0.005f64) {
        let t = temperature(cum, zeta);
        prop_assert!(rel_err(t, oracle::temperature(cum, zeta)) < 1e-15);
        prop_assert!(rel_err(cum_emissions_for_temperature(t, zeta), cum) < 1e-12 || cum == 0.0);
    }

    #[test]
    fn positive_damages_grow_with_temperature(pi1 in 0.0..0.3f64, pi2 in 0.0..0.3f64, t in 0.0..5.0f64, dt in 0.01..1.0f64) {
        prop_assume!(pi1 + pi2 > 1e-6);
        let d = DamageParams { pi1, pi2 };
        prop_assert!(net_output(10.0, t + dt, &d).unwrap() < net_output(10.0, t, &d).unwrap());
    }

    #[test]
    fn invalid_control_rates_are_rejected(mu in prop_oneof![-5.0..-1e-9f64, 1.0 + 1e-9..5.0f64]) {
        prop_assert!(net_emissions(mu, 0.3, 10.0).is_err());
        let ab = AbatementParams { b1: 0.5, b2: 2.8, b3: 1.0, b4: 0.01 };
        prop_assert!(abatement_cost(mu, 10.0, 0.3, &ab, 0.0).is_err());
    }
}

#[test]
fn infeasible_budgets_are_rejected() {
    assert!(consumption(1.0, 2.0, 0.0, 0.0, 0.0, 1.0).is_err());
    assert!(consumption(1.0, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
    assert!(step_capital(1.0, -2.0, 0.1).is_err());
    assert!(net_output(1.0, 2.0, &DamageParams { pi1: -1.0, pi2: 0.0 }).is_err());
    assert!(utility(0.0, 1.45).is_err());
}
