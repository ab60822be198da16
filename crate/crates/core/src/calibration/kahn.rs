//! Damage coefficients from projected GDP losses under two warming paths.
//!
//! The fit matches the model's ratio of damage denominators between the high
//! and low paths to the ratio of projected output, `(1 − Δ26)/(1 − Δ85)`.

use super::lsq::{multistart, Bounds, LsqOptions};
use super::CalibError;
use crate::model::DamageParams;

pub const PI_BOUND: f64 = 1.0;

pub fn fit_damage_kahn(loss_low: &[f64], loss_high: &[f64], temp_low: &[f64], temp_high: &[f64]) -> Result<DamageParams, CalibError> {
    let n = loss_low.len();
    if loss_high.len() != n || temp_low.len() != n || temp_high.len() != n || n < 2 {
        return Err(CalibError::InvalidInput("series must be aligned and have at least two points".into()));
    }
    if temp_low.iter().zip(temp_high).all(|(a, b)| a == b) {
        return Err(CalibError::DegenerateData("identical temperature paths".into()));
    }
    if loss_low.iter().chain(loss_high).any(|&d| !(d < 1.0)) {
        return Err(CalibError::InvalidInput("losses must be below 100%".into()));
    }
    let target: Vec<f64> = loss_low.iter().zip(loss_high).map(|(l, h)| (1.0 - l) / (1.0 - h)).collect();
    let residuals = |p: &[f64]| {
        let d = DamageParams { pi1: p[0], pi2: p[1] };
        (0..n)
            .map(|t| {
                let (lo, hi) = (d.denominator(temp_low[t]), d.denominator(temp_high[t]));
                (lo > 0.0 && hi > 0.0).then(|| hi / lo - target[t])
            })
            .collect::<Option<Vec<f64>>>()
    };
    let bounds = Bounds::new(vec![-PI_BOUND; 2], vec![PI_BOUND; 2])?;
    let fit = multistart(&residuals, &[0.0, 0.0], &bounds, &LsqOptions::default())?;
    Ok(DamageParams { pi1: fit.params[0], pi2: fit.params[1] })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paths() -> (Vec<f64>, Vec<f64>) {
        let low = (0..95).map(|t| 1.2 + 0.6 * (1.0 - (-0.04 * t as f64).exp())).collect();
        let high = (0..95).map(|t| 1.2 + 0.035 * t as f64 + 0.00012 * (t * t) as f64).collect();
        (low, high)
    }

    fn losses(d: &DamageParams, temps: &[f64]) -> Vec<f64> {
        // Loss relative to a no-warming baseline.
        temps.iter().map(|&t| 1.0 - 1.0 / d.denominator(t)).collect()
    }

    #[test]
    fn round_trip_recovers_parameters() {
        let (low, high) = paths();
        for truth in [DamageParams { pi1: 0.0842, pi2: 0.0096 }, DamageParams { pi1: -0.02, pi2: 0.011 }] {
            let fit = fit_damage_kahn(&losses(&truth, &low), &losses(&truth, &high), &low, &high).unwrap();
            assert!((fit.pi1 - truth.pi1).abs() < 1e-6, "{fit:?}");
            assert!((fit.pi2 - truth.pi2).abs() < 1e-6, "{fit:?}");
        }
    }

    #[test]
    fn equal_losses_give_no_damage() {
        let (low, high) = paths();
        let zero = vec![0.03; 95];
        let fit = fit_damage_kahn(&zero, &zero, &low, &high).unwrap();
        assert!(fit.pi1.abs() < 1e-8 && fit.pi2.abs() < 1e-8, "{fit:?}");
    }

    #[test]
    fn identical_paths_are_degenerate() {
        let (low, _) = paths();
        let z = vec![0.0; 95];
        assert!(matches!(fit_damage_kahn(&z, &z, &low, &low), Err(CalibError::DegenerateData(_))));
    }
}
