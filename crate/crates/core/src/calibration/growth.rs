//! One-region optimal growth model with exogenous output shifters.
//!
//! Maximizes `Σ_{t<H} β^t L_t u(c_t) + β^H V(Y_H)` over `K_1..K_H` where
//! `c_t L_t = D_t A_t K_t^α L_t^{1−α} + (1−δ)K_t − K_{t+1}` and `V` is the same
//! terminal value as the full model. The objective is concave and its Hessian
//! tridiagonal, so Newton converges in a handful of steps.

use super::CalibError;
use crate::banded::SymBanded;
use crate::model::{marginal_utility, terminal_value, utility, TERMINAL_CONSUMPTION_SHARE};

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthProblem {
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub delta: f64,
    pub initial_capital: f64,
    /// `H + 1` entries each.
    pub tfp: Vec<f64>,
    pub population: Vec<f64>,
    /// Multiplies gross output, e.g. `1/(1 + π1 T + π2 T²)`.
    pub output_factor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthPath {
    /// `K_0..K_H`.
    pub capital: Vec<f64>,
    /// Output per capita `Y_t/L_t`, `t = 0..H`.
    pub output_per_capita: Vec<f64>,
    /// `c_0..c_{H−1}`.
    pub consumption: Vec<f64>,
    pub iterations: usize,
}

const MAX_NEWTON: usize = 100;
const SAVING_GUESS: f64 = 0.2;

impl GrowthProblem {
    pub fn horizon(&self) -> usize {
        self.tfp.len() - 1
    }

    fn output(&self, t: usize, k: f64) -> f64 {
        let (a, l) = (self.tfp[t], self.population[t]);
        self.output_factor[t] * a * k.powf(self.alpha) * l.powf(1.0 - self.alpha)
    }

    fn consumption(&self, k: &[f64], t: usize) -> f64 {
        (self.output(t, k[t]) + (1.0 - self.delta) * k[t] - k[t + 1]) / self.population[t]
    }

    fn welfare(&self, k: &[f64]) -> Option<f64> {
        let h = self.horizon();
        let mut w = 0.0;
        let mut disc = 1.0;
        for t in 0..h {
            w += disc * self.population[t] * utility(self.consumption(k, t), self.gamma).ok()?;
            disc *= self.beta;
        }
        Some(w + disc * terminal_value(self.output(h, k[h]), self.population[h], self.gamma, self.beta).ok()?)
    }

    /// Gradient and negated Hessian with respect to `K_1..K_H`.
    fn derivatives(&self, k: &[f64]) -> (Vec<f64>, SymBanded) {
        let h = self.horizon();
        let (a, g) = (self.alpha, self.gamma);
        let mut grad = vec![0.0; h];
        let mut neg_hess = SymBanded::zeros(h, 1);
        let mut disc = 1.0;
        for t in 0..h {
            let l = self.population[t];
            let c = self.consumption(k, t);
            let up = marginal_utility(c, g);
            let upp = -g * up / c;
            let y = self.output(t, k[t]);
            let f1 = a * y / k[t] + 1.0 - self.delta;
            let f2 = a * (a - 1.0) * y / (k[t] * k[t]);
            // Column `t` holds K_{t+1}; K_t is column `t − 1` when t ≥ 1.
            grad[t] -= disc * up;
            neg_hess.add(t, t, -disc * upp / l);
            if t >= 1 {
                grad[t - 1] += disc * up * f1;
                neg_hess.add(t - 1, t - 1, -disc * (upp * f1 * f1 / l + up * f2));
                neg_hess.add(t - 1, t, disc * upp * f1 / l);
            }
            disc *= self.beta;
        }
        let s = TERMINAL_CONSUMPTION_SHARE;
        let (l, y) = (self.population[h], self.output(h, k[h]));
        let c = s * y / l;
        let up = marginal_utility(c, g);
        let upp = -g * up / c;
        let y1 = a * y / k[h];
        let y2 = a * (a - 1.0) * y / (k[h] * k[h]);
        let scale = disc / (1.0 - self.beta);
        grad[h - 1] += scale * up * s * y1;
        neg_hess.add(h - 1, h - 1, -scale * (upp * s * s * y1 * y1 / l + up * s * y2));
        (grad, neg_hess)
    }

    fn initial_guess(&self) -> Vec<f64> {
        let mut k = vec![self.initial_capital];
        for t in 0..self.horizon() {
            let next = (1.0 - self.delta) * k[t] + SAVING_GUESS * self.output(t, k[t]);
            k.push(next);
        }
        k
    }

    pub fn validate(&self) -> Result<(), CalibError> {
        let n = self.tfp.len();
        if n < 2 || self.population.len() != n || self.output_factor.len() != n {
            return Err(CalibError::InvalidInput("growth paths must share a length of at least 2".into()));
        }
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&self.tfp) || !positive(&self.population) || !positive(&self.output_factor) || !(self.initial_capital > 0.0) {
            return Err(CalibError::InvalidInput("growth inputs must be positive".into()));
        }
        Ok(())
    }
}

/// Solves the growth model to a relative Euler-residual tolerance of 1e-13.
pub fn solve_growth(p: &GrowthProblem) -> Result<GrowthPath, CalibError> {
    p.validate()?;
    let h = p.horizon();
    let mut k = p.initial_guess();
    let mut w = p.welfare(&k).ok_or_else(|| CalibError::NonConvergence("infeasible initial guess".into()))?;
    for it in 0..MAX_NEWTON {
        let (grad, neg_hess) = p.derivatives(&k);
        // Euler residuals in units of current marginal utility.
        let mut disc = 1.0;
        let mut resid: f64 = 0.0;
        for t in 0..h {
            let up = marginal_utility(p.consumption(&k, t), p.gamma);
            resid = resid.max((grad[t] / (disc * up)).abs());
            disc *= p.beta;
        }
        if resid < 1e-13 {
            return Ok(path(p, k, it));
        }
        let step = neg_hess
            .cholesky_solve(&grad)
            .map_err(|e| CalibError::NonConvergence(format!("Hessian not definite at pivot {}", e.pivot)))?;
        let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        let mut alpha = 1.0;
        loop {
            let mut trial = k.clone();
            for t in 0..h {
                trial[t + 1] += alpha * step[t];
            }
            if trial.iter().all(|v| *v > 0.0) {
                if let Some(wt) = p.welfare(&trial) {
                    // Accept on sufficient increase, or on any non-decrease
                    // once the step is at roundoff level.
                    if wt >= w + 1e-4 * alpha * slope || (alpha == 1.0 && wt >= w - 64.0 * f64::EPSILON * w.abs()) {
                        k = trial;
                        w = wt;
                        break;
                    }
                }
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Err(CalibError::NonConvergence(format!("line search failed, Euler residual {resid:.3e}")));
            }
        }
    }
    Err(CalibError::NonConvergence(format!("no convergence in {MAX_NEWTON} Newton steps")))
}

fn path(p: &GrowthProblem, capital: Vec<f64>, iterations: usize) -> GrowthPath {
    let h = p.horizon();
    let output_per_capita = (0..=h).map(|t| p.output(t, capital[t]) / p.population[t]).collect();
    let consumption = (0..h).map(|t| p.consumption(&capital, t)).collect();
    GrowthPath { capital, output_per_capita, consumption, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(h: usize) -> GrowthProblem {
        GrowthProblem {
            beta: 0.985,
            gamma: 1.45,
            alpha: 0.3,
            delta: 0.1,
            initial_capital: 50.0,
            tfp: (0..=h).map(|t| 5.0 * (0.01 * t as f64).exp()).collect(),
            population: (0..=h).map(|t| 0.3 + 0.1 * (1.0 - (-0.03 * t as f64).exp())).collect(),
            output_factor: vec![1.0; h + 1],
        }
    }

    fn euler_residual(p: &GrowthProblem, sol: &GrowthPath, t: usize) -> f64 {
        // u'(c_t) = β u'(c_{t+1})(1 − δ + αY_{t+1}/K_{t+1})
        let y = sol.output_per_capita[t + 1] * p.population[t + 1];
        let r = 1.0 - p.delta + p.alpha * y / sol.capital[t + 1];
        let lhs = marginal_utility(sol.consumption[t], p.gamma);
        (p.beta * marginal_utility(sol.consumption[t + 1], p.gamma) * r - lhs) / lhs
    }

    #[test]
    fn euler_equation_holds() {
        let p = problem(150);
        let sol = solve_growth(&p).unwrap();
        for t in 0..149 {
            assert!(euler_residual(&p, &sol, t).abs() < 1e-12, "t={t}");
        }
        assert!(sol.iterations < 30);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = problem(12);
        let k = p.initial_guess();
        let (grad, _) = p.derivatives(&k);
        for j in 0..12 {
            let h = 1e-6 * k[j + 1];
            let mut kp = k.clone();
            kp[j + 1] += h;
            let mut km = k.clone();
            km[j + 1] -= h;
            let fd = (p.welfare(&kp).unwrap() - p.welfare(&km).unwrap()) / (2.0 * h);
            assert!((fd - grad[j]).abs() <= 1e-6 * grad[j].abs().max(1e-3), "j={j}: {fd} vs {}", grad[j]);
        }
    }

    #[test]
    fn damage_factor_lowers_output() {
        let clean = solve_growth(&problem(100)).unwrap();
        let mut hot = problem(100);
        hot.output_factor = vec![0.97; 101];
        let hot = solve_growth(&hot).unwrap();
        for t in 0..80 {
            assert!(hot.output_per_capita[t] < clean.output_per_capita[t]);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let mut p = problem(10);
        p.population.pop();
        assert!(solve_growth(&p).is_err());
    }
}
