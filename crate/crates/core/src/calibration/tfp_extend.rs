//! TFP growth beyond the calibrated century.
//!
//! US growth relaxes to its long-run value; every other region's growth
//! tracks the US plus a catch-up term in the log gap of projected output per
//! capita.

/// Long-run US TFP growth, `0.0033·(1 − α)`.
pub fn us_longrun_growth(alpha: f64) -> f64 {
    0.0033 * (1.0 - alpha)
}

/// Year index of the last in-century growth rate (2099).
pub const LAST_CENTURY_INDEX: usize = 79;

pub const US_DECAY: f64 = 0.01;
pub const CATCH_UP: f64 = 0.005;

/// Extends growth paths to `len` years.
///
/// `in_century[i]` holds region `i`'s growth for `t = 0..=79`; `y79[i]` is its
/// projected output per capita in 2099. Returns full-length paths whose first
/// 80 entries are copied unchanged.
pub fn extend_tfp_growth(in_century: &[Vec<f64>], y79: &[f64], us: usize, alpha: f64, chi: f64, len: usize) -> Vec<Vec<f64>> {
    let n = in_century.len();
    let t0 = LAST_CENTURY_INDEX;
    let g_inf = us_longrun_growth(alpha);
    let g_us79 = in_century[us][t0];
    let us_growth = |t: usize| g_inf + (g_us79 - g_inf) * (-US_DECAY * (t - t0) as f64).exp();

    let mut out: Vec<Vec<f64>> = in_century.iter().map(|g| g[..=t0.min(len.saturating_sub(1))].to_vec()).collect();
    let mut y: Vec<f64> = y79.to_vec();
    for t in t0..len.saturating_sub(1) {
        let y_us = y[us];
        let next: Vec<f64> = (0..n)
            .map(|i| {
                if i == us {
                    us_growth(t + 1)
                } else {
                    us_growth(t + 1) + (1.0 - alpha) * chi * (y_us / y[i]).ln()
                }
            })
            .collect();
        for i in 0..n {
            y[i] *= (out[i][t] / (1.0 - alpha)).exp();
            out[i].push(next[i]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(g: f64) -> Vec<f64> {
        vec![g; LAST_CENTURY_INDEX + 1]
    }

    #[test]
    fn longrun_us_growth() {
        assert!((us_longrun_growth(0.3) - 0.00231).abs() < 1e-15);
    }

    #[test]
    fn us_converges_to_longrun() {
        let g = extend_tfp_growth(&[flat(0.004)], &[1.0], 0, 0.3, CATCH_UP, 2000);
        assert!((g[0][1999] - 0.00231).abs() < 1e-6);
        assert_eq!(g[0][79], 0.004);
        let expected = 0.00231 + (0.004 - 0.00231) * (-0.01f64 * 21.0).exp();
        assert!((g[0][100] - expected).abs() < 1e-15);
    }

    #[test]
    fn equal_income_tracks_us() {
        let g = extend_tfp_growth(&[flat(0.004), flat(0.004)], &[2.0, 2.0], 0, 0.3, CATCH_UP, 300);
        for t in 80..300 {
            assert!((g[1][t] - g[0][t]).abs() < 1e-15);
        }
    }

    #[test]
    fn poorer_region_catches_up() {
        let g = extend_tfp_growth(&[flat(0.004), flat(0.004)], &[2.0, 0.5], 0, 0.3, CATCH_UP, 300);
        for t in 80..300 {
            assert!(g[1][t] > g[0][t]);
        }
    }
}
