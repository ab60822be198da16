//! Carbon intensity from a zero-tax emissions and output projection.

use super::CalibError;

/// `σ_t = E_t / Q_t`, GtC per $T.
pub fn extract_carbon_intensity(emissions: &[f64], gross_output: &[f64]) -> Result<Vec<f64>, CalibError> {
    if emissions.len() != gross_output.len() {
        return Err(CalibError::InvalidInput(format!(
            "{} emission values against {} output values",
            emissions.len(),
            gross_output.len()
        )));
    }
    emissions
        .iter()
        .zip(gross_output)
        .enumerate()
        .map(|(index, (&e, &q))| {
            if !(q > 0.0) {
                Err(CalibError::ZeroGdp { index })
            } else if !(e >= 0.0) {
                Err(CalibError::InvalidInput(format!("negative emissions at index {index}")))
            } else {
                Ok(e / q)
            }
        })
        .collect()
}
