//! Linear temperature response to cumulative emissions.

use super::CalibError;

/// One emissions scenario on an annual grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RcpSeries {
    pub scenario: String,
    pub years: Vec<i32>,
    /// GtC per year.
    pub emissions: Vec<f64>,
    /// °C above pre-industrial.
    pub temperature: Vec<f64>,
}

impl RcpSeries {
    /// Emissions accumulated before each year, so `cum[0] = 0`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.emissions
            .iter()
            .map(|e| {
                let before = acc;
                acc += e;
                before
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcreFit {
    /// °C per GtC.
    pub zeta: f64,
    /// Common offset absorbing emissions before each series starts.
    pub intercept: f64,
    pub r_squared: f64,
}

/// Pooled OLS of temperature on cumulative emissions across all scenarios,
/// with one common intercept.
pub fn fit_tcre(series: &[RcpSeries]) -> Result<TcreFit, CalibError> {
    if series.is_empty() {
        return Err(CalibError::InvalidInput("no scenarios".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        if s.emissions.len() != s.temperature.len() || s.years.len() != s.emissions.len() {
            return Err(CalibError::InvalidInput(format!("scenario {} is not aligned", s.scenario)));
        }
        xs.extend(s.cumulative());
        ys.extend(&s.temperature);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let scale = xs.iter().map(|x| x * x).sum::<f64>();
    if xs.len() < 2 || sxx <= 1e-24 * scale.max(f64::MIN_POSITIVE) {
        return Err(CalibError::DegenerateData("cumulative emissions do not vary".into()));
    }
    let zeta = sxy / sxx;
    let r_squared = if syy > 0.0 { zeta * sxy / syy } else { 1.0 };
    Ok(TcreFit { zeta, intercept: my - zeta * mx, r_squared })
}
