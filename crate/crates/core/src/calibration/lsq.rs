//! Box-constrained nonlinear least squares.
//!
//! Levenberg-Marquardt with Nielsen damping, central-difference Jacobians and
//! an active-set projection onto the bounds. `multistart` runs it from several
//! deterministic points (a Halton sequence inside the box) and keeps the best.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LsqError {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("residuals could not be evaluated at any starting point")]
    NoValidStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, LsqError> {
        if lower.len() != upper.len() {
            return Err(LsqError::InvalidBounds("lower and upper differ in length".into()));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(LsqError::InvalidBounds(format!("parameter {j}: [{lo}, {hi}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn project(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }

    fn at_lower(&self, x: &[f64], j: usize) -> bool {
        x[j] - self.lower[j] <= 1e-10 * self.width(j)
    }

    fn at_upper(&self, x: &[f64], j: usize) -> bool {
        self.upper[j] - x[j] <= 1e-10 * self.width(j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqOptions {
    pub max_iterations: usize,
    /// Projected-gradient tolerance, relative to the initial gradient.
    pub gtol: f64,
    pub xtol: f64,
    pub starts: usize,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self { max_iterations: 300, gtol: 1e-12, xtol: 1e-13, starts: 8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqFit {
    pub params: Vec<f64>,
    /// `½·Σ r²` at the solution.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Parameters sitting on a bound at the solution.
    pub at_bound: Vec<bool>,
}

fn half_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn eval<F: Fn(&[f64]) -> Option<Vec<f64>>>(f: &F, x: &[f64]) -> Option<Vec<f64>> {
    f(x).filter(|r| r.iter().all(|v| v.is_finite()))
}

fn jacobian<F: Fn(&[f64]) -> Option<Vec<f64>>>(f: &F, x: &[f64], bounds: &Bounds, m: usize) -> Option<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 6e-6 * x[j].abs().max(1e-2 * bounds.width(j));
        let up = (x[j] + h).min(bounds.upper[j]);
        let dn = (x[j] - h).max(bounds.lower[j]);
        xp[j] = up;
        let rp = eval(f, &xp)?;
        xp[j] = dn;
        let rm = eval(f, &xp)?;
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (up - dn);
        }
    }
    Some(jac)
}

/// Single-start bounded Levenberg-Marquardt. Returns `None` if the residuals
/// cannot be evaluated at the (projected) starting point.
pub fn levenberg_marquardt<F>(f: &F, x0: &[f64], bounds: &Bounds, opts: &LsqOptions) -> Option<LsqFit>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = bounds.dim();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut r = eval(f, &x)?;
    let m = r.len();
    let mut cost = half_sq(&r);
    let mut lambda = 1e-3;
    let mut nu = 2.0;
    let mut g0 = None;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let Some(jac) = jacobian(f, &x, bounds, m) else { break };
        let rv = DVector::from_column_slice(&r);
        let g = jac.transpose() * &rv;
        let a = jac.transpose() * &jac;

        // Variables pinned at a bound the gradient pushes against stay fixed.
        let free: Vec<usize> = (0..n)
            .filter(|&j| !((bounds.at_lower(&x, j) && g[j] > 0.0) || (bounds.at_upper(&x, j) && g[j] < 0.0)))
            .collect();
        let pg = free.iter().map(|&j| g[j].abs()).fold(0.0, f64::max);
        let g_ref = *g0.get_or_insert(pg.max(f64::MIN_POSITIVE));
        if pg <= opts.gtol * g_ref || free.is_empty() {
            converged = true;
            break;
        }

        let k = free.len();
        let diag: Vec<f64> = free.iter().map(|&j| a[(j, j)].max(1e-12 * g_ref)).collect();
        loop {
            let mut sys = DMatrix::zeros(k, k);
            let mut rhs = DVector::zeros(k);
            for (p, &i) in free.iter().enumerate() {
                rhs[p] = -g[i];
                for (q, &j) in free.iter().enumerate() {
                    sys[(p, q)] = a[(i, j)];
                }
                sys[(p, p)] += lambda * diag[p];
            }
            let Some(step) = sys.clone().cholesky().map(|c| c.solve(&rhs)) else {
                lambda *= nu;
                nu *= 2.0;
                if lambda > 1e30 {
                    break 'outer;
                }
                continue;
            };
            let mut trial = x.clone();
            for (p, &j) in free.iter().enumerate() {
                trial[j] += step[p];
            }
            bounds.project(&mut trial);
            let dx: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let dx_norm = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
            let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();

            let predicted = free
                .iter()
                .enumerate()
                .map(|(p, &j)| 0.5 * dx[j] * (lambda * diag[p] * dx[j] - g[j]))
                .sum::<f64>();
            // Reduction summed term by term so it stays resolvable when the
            // residual norm is dominated by a component that cannot shrink.
            let trial_r = eval(f, &trial);
            let reduction = trial_r
                .as_deref()
                .map(|tr| 0.5 * r.iter().zip(tr).map(|(a, b)| (a - b) * (a + b)).sum::<f64>())
                .unwrap_or(f64::NEG_INFINITY);
            if reduction > 0.0 {
                let rho = if predicted > 0.0 { reduction / predicted } else { 1.0 };
                x = trial;
                r = trial_r.expect("finite reduction implies residuals");
                cost = half_sq(&r);
                lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                if dx_norm <= opts.xtol * (x_norm + opts.xtol) {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            if dx_norm <= opts.xtol * (x_norm + opts.xtol) {
                converged = true;
                break 'outer;
            }
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e30 {
                break 'outer;
            }
        }
    }

    let at_bound = (0..n).map(|j| bounds.at_lower(&x, j) || bounds.at_upper(&x, j)).collect();
    Some(LsqFit { params: x, cost, iterations, converged, at_bound })
}

fn halton(index: usize, base: usize) -> f64 {
    let (mut f, mut r, mut i) = (1.0, 0.0, index);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Deterministic starting points: `x0` itself, then points halfway between
/// `x0` and successive Halton points of the box.
pub fn start_points(x0: &[f64], bounds: &Bounds, count: usize) -> Vec<Vec<f64>> {
    let mut first = x0.to_vec();
    bounds.project(&mut first);
    let mut out = vec![first.clone()];
    for k in 1..count {
        let p = (0..bounds.dim())
            .map(|j| {
                let h = bounds.lower[j] + halton(k, PRIMES[j % PRIMES.len()]) * bounds.width(j);
                first[j] + 0.5 * (h - first[j])
            })
            .collect();
        out.push(p);
    }
    out
}

/// Runs `levenberg_marquardt` from `opts.starts` deterministic points and keeps
/// the lowest cost (earliest start on ties).
pub fn multistart<F>(f: &F, x0: &[f64], bounds: &Bounds, opts: &LsqOptions) -> Result<LsqFit, LsqError>
where
    F: Fn(&[f64]) -> Option<Vec<f64>> + Sync,
{
    use rayon::prelude::*;
    if x0.len() != bounds.dim() {
        return Err(LsqError::InvalidBounds(format!("{} parameters, {} bounds", x0.len(), bounds.dim())));
    }
    let starts = start_points(x0, bounds, opts.starts.max(1));
    let fits: Vec<Option<LsqFit>> = starts.par_iter().map(|s| levenberg_marquardt(f, s, bounds, opts)).collect();
    fits.into_iter()
        .flatten()
        .fold(None, |best: Option<LsqFit>, fit| match best {
            Some(b) if b.cost <= fit.cost => Some(b),
            _ => Some(fit),
        })
        .ok_or(LsqError::NoValidStart)
}
