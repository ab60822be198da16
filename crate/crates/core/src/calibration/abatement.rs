//! Abatement-cost coefficients from emissions under a set of carbon taxes.
//!
//! With no permit market a taxed region abates until its marginal abatement
//! cost equals the tax, so every interior control rate gives one equation
//! `τ = 1000·b2·μ^{b2−1}(b1 + b3·e^{−b4 t})`. The fit is least squares in logs.

use super::lsq::{multistart, Bounds, LsqOptions};
use super::CalibError;
use crate::model::{mac, AbatementParams};

/// Lower edge of `b2`; the interval is open at 2.
pub const B2_MIN: f64 = 2.0 + 1e-9;
pub const B2_MAX: f64 = 6.0;
pub const B4_MAX: f64 = 0.2;

/// Emissions of one region under one tax path.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxRun {
    pub scenario: String,
    /// USD/tC, aligned with the fit's time grid.
    pub tax: Vec<f64>,
    /// GtC.
    pub emissions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbatementFit {
    pub params: AbatementParams,
    /// `b4` ended on a bound, so `b1` and `b3` are weakly separated.
    pub b4_at_bound: bool,
    pub points: usize,
    /// Root-mean-square log error.
    pub rms_log_error: f64,
}

/// `μ = 1 − E/E_zero-tax`.
pub fn control_rate(emissions: f64, zero_tax_emissions: f64) -> f64 {
    1.0 - emissions / zero_tax_emissions
}

/// Fits `(b1, b2, b3, b4)`; `times[k]` is years since the base year for grid
/// point `k`. Zero-tax points and control rates outside `(0, 1)` are skipped.
pub fn fit_abatement(runs: &[TaxRun], zero_tax_emissions: &[f64], times: &[f64]) -> Result<AbatementFit, CalibError> {
    let n = times.len();
    if zero_tax_emissions.len() != n || runs.iter().any(|r| r.tax.len() != n || r.emissions.len() != n) {
        return Err(CalibError::InvalidInput("tax runs must align with the time grid".into()));
    }
    let mut points = Vec::new();
    let mut levels = Vec::new();
    for run in runs {
        let mut used = false;
        for k in 0..n {
            let base = zero_tax_emissions[k];
            if run.tax[k] <= 0.0 || base <= 0.0 {
                continue;
            }
            let mu = control_rate(run.emissions[k], base);
            if mu > 0.0 && mu < 1.0 {
                points.push((mu, times[k], run.tax[k].ln()));
                used = true;
            }
        }
        if used {
            levels.push(&run.scenario);
        }
    }
    if levels.len() < 2 || points.len() < 4 {
        return Err(CalibError::NoInteriorPoints);
    }

    let residuals = |p: &[f64]| {
        let a = AbatementParams { b1: p[0], b2: p[1], b3: p[2], b4: p[3] };
        points
            .iter()
            .map(|&(mu, t, ln_tax)| {
                let m = mac(mu, &a, t);
                (m > 0.0).then(|| m.ln() - ln_tax)
            })
            .collect::<Option<Vec<f64>>>()
    };
    let bounds = Bounds::new(vec![0.0, B2_MIN, 0.0, 0.0], vec![5.0, B2_MAX, 50.0, B4_MAX])?;
    let fit = multistart(&residuals, &[0.4, 3.0, 7.0, 0.15], &bounds, &LsqOptions::default())?;
    let p = &fit.params;
    Ok(AbatementFit {
        params: AbatementParams { b1: p[0], b2: p[1], b3: p[2], b4: p[3] },
        b4_at_bound: fit.at_bound[3],
        points: points.len(),
        rms_log_error: (2.0 * fit.cost / points.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAXES: [f64; 10] = [10.0, 25.0, 50.0, 100.0, 150.0, 200.0, 300.0, 400.0, 600.0, 800.0];

    /// Emissions a cost-minimizing region would report under each constant tax.
    fn synthetic(a: &AbatementParams, times: &[f64], base: &[f64]) -> Vec<TaxRun> {
        TAXES
            .iter()
            .map(|&tax| TaxRun {
                scenario: format!("tax{tax}"),
                tax: vec![tax; times.len()],
                emissions: times
                    .iter()
                    .zip(base)
                    .map(|(&t, &e0)| {
                        let mu = (tax / (1000.0 * a.b2 * a.level(t))).powf(1.0 / (a.b2 - 1.0)).min(1.0);
                        (1.0 - mu) * e0
                    })
                    .collect(),
            })
            .collect()
    }

    fn grid() -> (Vec<f64>, Vec<f64>) {
        let times: Vec<f64> = (0..=16).map(|k| 5.0 * k as f64).collect();
        let base = times.iter().map(|t| 1.6 * (1.0 + 0.01 * t)).collect();
        (times, base)
    }

    #[test]
    fn round_trip_us_coefficients() {
        let truth = AbatementParams { b1: 0.462, b2: 2.859, b3: 9.92, b4: 0.182 };
        let (times, base) = grid();
        let fit = fit_abatement(&synthetic(&truth, &times, &base), &base, &times).unwrap();
        let p = fit.params;
        for (got, want) in [(p.b1, truth.b1), (p.b2, truth.b2), (p.b3, truth.b3), (p.b4, truth.b4)] {
            assert!((got / want - 1.0).abs() < 0.01, "{p:?}");
        }
        assert!(!fit.b4_at_bound);
        assert!(fit.rms_log_error < 1e-8);
    }

    #[test]
    fn bound_b4_is_flagged() {
        let truth = AbatementParams { b1: 0.292, b2: 2.499, b3: 7.625, b4: 0.2 };
        let (times, base) = grid();
        let fit = fit_abatement(&synthetic(&truth, &times, &base), &base, &times).unwrap();
        assert!(fit.b4_at_bound);
        assert!((fit.params.b2 / truth.b2 - 1.0).abs() < 0.01);
    }

    #[test]
    fn control_rate_arithmetic() {
        assert_eq!(control_rate(1.5, 2.0), 0.25);
    }

    #[test]
    fn zero_tax_runs_are_excluded() {
        let (times, base) = grid();
        let none = TaxRun { scenario: "zero".into(), tax: vec![0.0; times.len()], emissions: base.clone() };
        assert_eq!(fit_abatement(&[none.clone(), none], &base, &times), Err(CalibError::NoInteriorPoints));
    }
}
