//! One region's welfare maximization against fixed permit prices and fixed
//! emissions of the rest of the world.
//!
//! Decisions are the control rate `μ_t` and next-period capital `K_{t+1}`
//! (equivalently investment). With trading enabled and a positive price the
//! cap always binds after trade, so permit purchases are `E_t − Ē_t`; at a
//! zero price the smallest purchase that satisfies the cap is reported.
//! Without trading the cap `E_t ≤ Ē_t` restricts `μ_t` from below.
//!
//! The solver is a projected Newton method: the gradient is exact (the effect
//! of own emissions on future temperatures enters through an adjoint sweep),
//! while the Hessian keeps only the per-period blocks with temperatures held
//! fixed, which makes it banded.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banded::SymBanded;
use crate::model::{marginal_utility, USD_PER_TC};
use crate::params::{GlobalParams, RegionParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("region {region}: no positive-consumption trajectory in year index {year}")]
    Infeasible { region: String, year: usize },
    #[error("region {region}: solver stopped after {iterations} iterations with KKT residual {residual:e}")]
    MaxIterations { region: String, iterations: usize, residual: f64, best: Box<RegionSolution> },
    #[error("region {region}: invalid problem: {reason}")]
    InvalidProblem { region: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionProblem {
    pub region: RegionParams,
    pub global: GlobalParams,
    /// Permit price per year, $T/GtC.
    pub prices: Vec<f64>,
    /// Sum of all other regions' emissions per year, GtC.
    pub other_emissions: Vec<f64>,
    pub initial_capital: f64,
    pub initial_cum_emissions: f64,
    /// Permit trading allowed; when false, purchases are fixed at zero.
    pub trading: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// KKT tolerance. Stationarity in the control rate is measured in USD/tC
    /// and in capital as a return, both relative to marginal utility.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iterations: 400 }
    }
}

/// Per-year decisions and states. Vectors of length `H` unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Trajectory {
    pub mu: Vec<f64>,
    pub permit_purchase: Vec<f64>,
    pub investment: Vec<f64>,
    pub consumption: Vec<f64>,
    /// Length `H + 1`.
    pub capital: Vec<f64>,
    pub emissions: Vec<f64>,
    /// Length `H + 1`; the last entry is the terminal year.
    pub gross_output: Vec<f64>,
    /// Length `H + 1`; the last entry is the terminal year.
    pub net_output: Vec<f64>,
    pub abatement_cost: Vec<f64>,
    /// Length `H + 1`.
    pub cum_emissions: Vec<f64>,
    /// Length `H + 1`.
    pub temperature: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.mu.len()
    }
}

/// Present-value shadow prices (utils per unit) of the constraints at year `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Multipliers {
    /// Cap constraint `E_t − E^P_t ≤ Ē_t`, per GtC.
    pub cap: Vec<f64>,
    /// Capital transition at `t` (value of one more unit of `K_{t+1}`).
    pub capital: Vec<f64>,
    /// Cumulative-emissions transition at `t` (value of one more unit of `𝓔_{t+1}`).
    pub cum_emissions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSolution {
    pub trajectory: Trajectory,
    pub welfare: f64,
    pub kkt_residual: f64,
    pub multipliers: Multipliers,
    pub iterations: usize,
    pub converged: bool,
}

/// Starting point for a solve, typically the previous solution.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub mu: Vec<f64>,
    pub capital: Vec<f64>,
}

impl From<&RegionSolution> for WarmStart {
    fn from(s: &RegionSolution) -> Self {
        Self { mu: s.trajectory.mu.clone(), capital: s.trajectory.capital.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Everything computed by one forward/adjoint pass.
struct Eval {
    q: Vec<f64>,
    y: Vec<f64>,
    phi: Vec<f64>,
    e: Vec<f64>,
    inv: Vec<f64>,
    c: Vec<f64>,
    c_term: f64,
    cum: Vec<f64>,
    temp: Vec<f64>,
    welfare: f64,
    /// `∂W/∂E_t` through all later temperatures.
    lam: Vec<f64>,
}

struct Ctx<'a> {
    p: &'a RegionProblem,
    h: usize,
    disc: Vec<f64>,
}

/// Local second-order data of one period term in the variables `[K_t, μ_t, K_{t+1}]`.
struct Local {
    g: [f64; 3],
    hess: [[f64; 3]; 3],
}

impl<'a> Ctx<'a> {
    fn new(p: &'a RegionProblem) -> Self {
        let h = p.global.horizon;
        let disc = (0..=h).map(|t| p.global.beta.powi(t as i32)).collect();
        Self { p, h, disc }
    }

    fn price(&self, t: usize) -> f64 {
        if self.p.trading {
            self.p.prices[t]
        } else {
            0.0
        }
    }

    fn gross_output(&self, t: usize, k: f64) -> f64 {
        let g = &self.p.global;
        let r = &self.p.region;
        r.tfp[t] * k.powf(g.alpha) * r.population[t].powf(1.0 - g.alpha)
    }

    /// Lowest admissible control rate given capital (binding cap without trading).
    fn mu_floor(&self, t: usize, k: f64) -> f64 {
        if self.p.trading {
            return 0.0;
        }
        let gross = self.p.region.intensity[t] * self.gross_output(t, k);
        if gross <= 0.0 {
            return 0.0;
        }
        (1.0 - self.p.region.caps[t] / gross).clamp(0.0, 1.0)
    }

    fn evaluate(&self, mu: &[f64], k: &[f64]) -> Result<Eval, usize> {
        let (p, h) = (self.p, self.h);
        let g = &p.global;
        let r = &p.region;
        let mut q = vec![0.0; h + 1];
        let mut y = vec![0.0; h + 1];
        let mut phi = vec![0.0; h];
        let mut e = vec![0.0; h];
        let mut inv = vec![0.0; h];
        let mut c = vec![0.0; h];
        let mut cum = vec![0.0; h + 1];
        let mut temp = vec![0.0; h + 1];
        cum[0] = p.initial_cum_emissions;
        let mut welfare = 0.0;
        for t in 0..h {
            if !(k[t] > 0.0) {
                return Err(t);
            }
            temp[t] = g.zeta * cum[t];
            let denom = r.damage.denominator(temp[t]);
            if denom <= 0.0 {
                return Err(t);
            }
            q[t] = self.gross_output(t, k[t]);
            y[t] = q[t] / denom;
            let sigma = r.intensity[t];
            phi[t] = r.abatement.level(t as f64) * sigma * mu[t].powf(r.abatement.b2) * q[t];
            e[t] = (1.0 - mu[t]) * sigma * q[t];
            inv[t] = k[t + 1] - (1.0 - g.delta) * k[t];
            let m = self.price(t);
            let res = y[t] - inv[t] - phi[t] - m * (e[t] - r.caps[t]);
            c[t] = res / r.population[t];
            if !(c[t] > 0.0) || !c[t].is_finite() {
                return Err(t);
            }
            welfare += self.disc[t] * r.population[t] * crate::model::utility(c[t], g.gamma).map_err(|_| t)?;
            cum[t + 1] = cum[t] + e[t] + p.other_emissions[t];
        }
        if !(k[h] > 0.0) {
            return Err(h);
        }
        temp[h] = g.zeta * cum[h];
        let denom = r.damage.denominator(temp[h]);
        if denom <= 0.0 {
            return Err(h);
        }
        q[h] = self.gross_output(h, k[h]);
        y[h] = q[h] / denom;
        let c_term = g.consumption_share_terminal * y[h] / r.population[h];
        let term_scale = self.disc[h] * r.population[h] / (1.0 - g.beta);
        welfare += term_scale * crate::model::utility(c_term, g.gamma).map_err(|_| h)?;

        // Adjoint over cumulative emissions.
        let dy_dcum = |t: usize| {
            let d = r.damage.denominator(temp[t]);
            -q[t] * g.zeta * r.damage.denominator_slope(temp[t]) / (d * d)
        };
        let mut lam = vec![0.0; h];
        let mut acc = self.disc[h] / (1.0 - g.beta)
            * marginal_utility(c_term, g.gamma)
            * g.consumption_share_terminal
            * dy_dcum(h);
        for t in (0..h).rev() {
            lam[t] = acc;
            acc += self.disc[t] * marginal_utility(c[t], g.gamma) * dy_dcum(t);
        }
        Ok(Eval { q, y, phi, e, inv, c, c_term, cum, temp, welfare, lam })
    }

    /// Derivatives of period `t`'s welfare contribution plus `lam_t·E_t`,
    /// holding `T_t` fixed.
    fn local(&self, ev: &Eval, mu: &[f64], k: &[f64], t: usize) -> Local {
        let g = &self.p.global;
        let r = &self.p.region;
        let w = self.disc[t];
        let l = r.population[t];
        let kt = k[t];
        let q = ev.q[t];
        let qk = g.alpha * q / kt;
        let qkk = g.alpha * (g.alpha - 1.0) * q / (kt * kt);
        let denom = r.damage.denominator(ev.temp[t]);
        let (yk, ykk) = (qk / denom, qkk / denom);
        let sigma = r.intensity[t];
        let theta = r.abatement.level(t as f64) * sigma;
        let b2 = r.abatement.b2;
        let m = mu[t];
        let mb = m.powf(b2);
        let mb1 = if m > 0.0 { m.powf(b2 - 1.0) } else { 0.0 };
        let mb2 = if m > 0.0 { m.powf(b2 - 2.0) } else { 0.0 };
        let phi_m = theta * b2 * mb1 * q;
        let phi_mm = theta * b2 * (b2 - 1.0) * mb2 * q;
        let phi_k = theta * mb * qk;
        let phi_mk = theta * b2 * mb1 * qk;
        let phi_kk = theta * mb * qkk;
        let e_m = -sigma * q;
        let e_k = (1.0 - m) * sigma * qk;
        let e_mk = -sigma * qk;
        let e_kk = (1.0 - m) * sigma * qkk;
        let price = self.price(t);

        // h = Y − K' + (1−δ)K − Φ − m(E − Ē); variables [K, μ, K'].
        let hx = [yk + (1.0 - g.delta) - phi_k - price * e_k, -phi_m - price * e_m, -1.0];
        let hxx = [
            [ykk - phi_kk - price * e_kk, -phi_mk - price * e_mk, 0.0],
            [-phi_mk - price * e_mk, -phi_mm, 0.0],
            [0.0, 0.0, 0.0],
        ];
        let ex = [e_k, e_m, 0.0];
        let exx = [[e_kk, e_mk, 0.0], [e_mk, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let c = ev.c[t];
        let u1 = marginal_utility(c, g.gamma);
        let u2 = -g.gamma * c.powf(-g.gamma - 1.0);
        let lam = ev.lam[t];
        let mut out = Local { g: [0.0; 3], hess: [[0.0; 3]; 3] };
        for i in 0..3 {
            out.g[i] = w * u1 * hx[i] + lam * ex[i];
            for j in 0..3 {
                out.hess[i][j] = w * u2 * hx[i] * hx[j] / l + w * u1 * hxx[i][j] + lam * exx[i][j];
            }
        }
        out
    }

    /// Derivatives of the capped control rate `μ = 1 − Ē/(σQ(K))` in `K`.
    fn mu_floor_derivs(&self, ev: &Eval, k: &[f64], t: usize) -> (f64, f64) {
        let g = &self.p.global;
        let r = &self.p.region;
        let q = ev.q[t];
        let qk = g.alpha * q / k[t];
        let qkk = g.alpha * (g.alpha - 1.0) * q / (k[t] * k[t]);
        let cap = r.caps[t];
        let sigma = r.intensity[t];
        (cap * qk / (sigma * q * q), cap * (qkk * q - 2.0 * qk * qk) / (sigma * q * q * q))
    }

    fn cap_substituted(&self, bounds: &[Bound], k: &[f64], t: usize) -> bool {
        !self.p.trading && t > 0 && bounds[t] == Bound::Lower && self.mu_floor(t, k[t]) > 0.0
    }

    /// Full gradient and banded Hessian in `z = [μ_0, K_1, μ_1, K_2, …, μ_{H−1}, K_H]`,
    /// with pinned control rates removed and capped ones substituted.
    fn assemble(&self, ev: &Eval, mu: &[f64], k: &[f64], bounds: &[Bound]) -> (Vec<f64>, SymBanded, Vec<f64>) {
        let h = self.h;
        let n = 2 * h;
        let mut grad = vec![0.0; n];
        let mut hess = SymBanded::zeros(n, 2);
        // Raw (unreduced) ∂/∂μ_t, kept for bound classification and multipliers.
        let mut raw_mu = vec![0.0; h];
        for t in 0..h {
            let loc = self.local(ev, mu, k, t);
            raw_mu[t] = loc.g[1];
            // Map local slots to global indices; K_0 is fixed.
            let idx = [if t == 0 { None } else { Some(2 * t - 1) }, Some(2 * t), Some(2 * t + 1)];
            let mut g3 = loc.g;
            let mut h3 = loc.hess;
            if self.cap_substituted(bounds, k, t) {
                let (gk, gkk) = self.mu_floor_derivs(ev, k, t);
                // Reduce μ into K: F(K, K') = f(K, μ(K), K').
                let fk = g3[0] + g3[1] * gk;
                let hkk = h3[0][0] + 2.0 * h3[0][1] * gk + h3[1][1] * gk * gk + g3[1] * gkk;
                let hkk2 = h3[0][2] + h3[1][2] * gk;
                g3 = [fk, 0.0, g3[2]];
                h3 = [[hkk, 0.0, hkk2], [0.0, 0.0, 0.0], [hkk2, 0.0, h3[2][2]]];
            } else if bounds[t] != Bound::Free {
                g3[1] = 0.0;
                for j in 0..3 {
                    h3[1][j] = 0.0;
                    h3[j][1] = 0.0;
                }
            }
            for a in 0..3 {
                let Some(ia) = idx[a] else { continue };
                grad[ia] += g3[a];
                for b in 0..=a {
                    let Some(ib) = idx[b] else { continue };
                    hess.add(ia, ib, h3[a][b]);
                }
            }
        }
        // Terminal value in K_H.
        let g = &self.p.global;
        let r = &self.p.region;
        let kh = k[h];
        let qk = g.alpha * ev.q[h] / kh;
        let qkk = g.alpha * (g.alpha - 1.0) * ev.q[h] / (kh * kh);
        let denom = r.damage.denominator(ev.temp[h]);
        let s = g.consumption_share_terminal;
        let scale = self.disc[h] / (1.0 - g.beta);
        let u1 = marginal_utility(ev.c_term, g.gamma);
        let u2 = -g.gamma * ev.c_term.powf(-g.gamma - 1.0);
        grad[n - 1] += scale * u1 * s * qk / denom;
        hess.add(n - 1, n - 1, scale * (u2 * (s * qk / denom).powi(2) / r.population[h] + u1 * s * qkk / denom));
        (grad, hess, raw_mu)
    }

    fn classify(&self, mu: &[f64], k: &[f64], raw_mu: &[f64], eps: f64) -> Vec<Bound> {
        (0..self.h)
            .map(|t| {
                let lo = self.mu_floor(t, k[t]);
                if lo >= 1.0 - 1e-14 {
                    Bound::Upper
                } else if mu[t] >= 1.0 - eps && raw_mu[t] >= 0.0 {
                    Bound::Upper
                } else if mu[t] <= lo + eps && raw_mu[t] <= 0.0 {
                    Bound::Lower
                } else {
                    Bound::Free
                }
            })
            .collect()
    }

    /// Scaled projected-gradient norm.
    fn kkt_residual(&self, ev: &Eval, k: &[f64], grad: &[f64], raw_mu: &[f64], mu: &[f64]) -> f64 {
        let g = &self.p.global;
        let mut worst: f64 = 0.0;
        for t in 0..self.h {
            // Stationarity in μ, expressed in USD/tC.
            let mu_scale = self.disc[t] * marginal_utility(ev.c[t], g.gamma) * self.p.region.intensity[t] * ev.q[t] / USD_PER_TC;
            let lo = self.mu_floor(t, k[t]);
            let gm = raw_mu[t] / mu_scale;
            let comp = if lo >= 1.0 - 1e-14 {
                0.0
            } else if mu[t] >= 1.0 - 1e-12 {
                (-gm).max(0.0)
            } else if mu[t] <= lo + 1e-12 {
                gm.max(0.0)
            } else {
                gm.abs()
            };
            worst = worst.max(comp);
            let k_scale = self.disc[t] * marginal_utility(ev.c[t], g.gamma);
            worst = worst.max((grad[2 * t + 1] / k_scale).abs());
        }
        worst
    }

    fn project(&self, mu: &mut [f64], k: &[f64], bounds: &[Bound]) {
        for t in 0..self.h {
            let lo = self.mu_floor(t, k[t]);
            mu[t] = match bounds[t] {
                Bound::Upper => 1.0,
                Bound::Lower => lo,
                Bound::Free => mu[t].clamp(lo, 1.0),
            };
        }
    }

    fn initial_guess(&self, warm: Option<&WarmStart>) -> Result<(Vec<f64>, Vec<f64>), RegionError> {
        let h = self.h;
        if let Some(w) = warm {
            if w.mu.len() == h && w.capital.len() == h + 1 {
                let mut k = w.capital.clone();
                k[0] = self.p.initial_capital;
                let mut mu = w.mu.clone();
                for t in 0..h {
                    mu[t] = mu[t].clamp(self.mu_floor(t, k[t]), 1.0);
                }
                if self.evaluate(&mu, &k).is_ok() {
                    return Ok((mu, k));
                }
            }
        }
        self.cold_guess()
    }

    fn cold_guess(&self) -> Result<(Vec<f64>, Vec<f64>), RegionError> {
        let (p, h) = (self.p, self.h);
        let g = &p.global;
        let r = &p.region;
        let mut mu = vec![0.0; h];
        let mut k = vec![0.0; h + 1];
        k[0] = p.initial_capital;
        let mut cum = p.initial_cum_emissions;
        for t in 0..h {
            let temp = g.zeta * cum;
            let denom = r.damage.denominator(temp);
            if denom <= 0.0 {
                return Err(RegionError::Infeasible { region: r.name.clone(), year: t });
            }
            let q = self.gross_output(t, k[t]);
            let y = q / denom;
            let price = self.price(t);
            let level = r.abatement.level(t as f64);
            let cost_min = if price > 0.0 {
                (price / (r.abatement.b2 * level)).powf(1.0 / (r.abatement.b2 - 1.0)).min(1.0)
            } else {
                0.0
            };
            let lo = self.mu_floor(t, k[t]);
            let resources = |m: f64| {
                let phi = level * r.intensity[t] * m.powf(r.abatement.b2) * q;
                let e = (1.0 - m) * r.intensity[t] * q;
                y - phi - price * (e - r.caps[t])
            };
            let candidates = [cost_min.max(lo), lo, 1.0];
            let (best_mu, res) = candidates
                .iter()
                .map(|&m| (m, resources(m)))
                .fold((lo, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            mu[t] = best_mu;
            let saving = 0.22;
            let mut inv = saving * res.max(0.0);
            if res - inv <= 0.0 {
                inv = -0.5 * (1.0 - g.delta) * k[t];
                if res - inv <= 0.0 {
                    return Err(RegionError::Infeasible { region: r.name.clone(), year: t });
                }
            }
            k[t + 1] = (1.0 - g.delta) * k[t] + inv;
            cum += (1.0 - mu[t]) * r.intensity[t] * q + p.other_emissions[t];
        }
        Ok((mu, k))
    }
}

fn validate(p: &RegionProblem) -> Result<(), RegionError> {
    let bad = |reason: String| Err(RegionError::InvalidProblem { region: p.region.name.clone(), reason });
    if let Err(e) = p.global.validate() {
        return bad(e.to_string());
    }
    if let Err(e) = p.region.validate(p.global.horizon) {
        return bad(e.to_string());
    }
    let h = p.global.horizon;
    if p.prices.len() < h || p.other_emissions.len() < h {
        return bad(format!("price/other-emission paths shorter than horizon {h}"));
    }
    if p.prices.iter().take(h).any(|&m| !(m >= 0.0)) {
        return bad("negative permit price".into());
    }
    if !(p.initial_capital > 0.0) || !(p.initial_cum_emissions >= 0.0) {
        return bad("initial state out of range".into());
    }
    Ok(())
}

/// Solves the region's problem to the requested KKT tolerance.
pub fn solve_region(problem: &RegionProblem, options: &SolverOptions) -> Result<RegionSolution, RegionError> {
    solve_region_from(problem, options, None)
}

pub fn solve_region_from(
    problem: &RegionProblem,
    options: &SolverOptions,
    warm: Option<&WarmStart>,
) -> Result<RegionSolution, RegionError> {
    validate(problem)?;
    let ctx = Ctx::new(problem);
    let h = ctx.h;
    let (mut mu, mut k) = ctx.initial_guess(warm)?;
    let infeasible = |t: usize| RegionError::Infeasible { region: problem.region.name.clone(), year: t };
    let mut ev = ctx.evaluate(&mu, &k).map_err(infeasible)?;
    let mut bounds = vec![Bound::Free; h];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut stalled = 0;

    while iterations < options.max_iterations {
        let (_, _, raw0) = ctx.assemble(&ev, &mu, &k, &bounds);
        let eps = 1e-9;
        bounds = ctx.classify(&mu, &k, &raw0, eps);
        ctx.project(&mut mu, &k, &bounds);
        ev = ctx.evaluate(&mu, &k).map_err(infeasible)?;
        let (grad, hess, raw) = ctx.assemble(&ev, &mu, &k, &bounds);
        residual = ctx.kkt_residual(&ev, &k, &grad, &raw, &mu);
        if residual <= options.tol {
            break;
        }
        iterations += 1;

        // Pinned control rates carry no step.
        let pinned: Vec<bool> = (0..h).map(|t| bounds[t] != Bound::Free).collect();
        let mut rhs = grad.clone();
        for t in (0..h).filter(|&t| pinned[t]) {
            rhs[2 * t] = 0.0;
        }
        // Negate for a positive-definite system; scale-aware regularization.
        let n = 2 * h;
        let mut neg = SymBanded::zeros(n, 2);
        for i in 0..n {
            for j in i.saturating_sub(2)..=i {
                neg.set(i, j, -hess.get(i, j));
            }
        }
        for t in (0..h).filter(|&t| pinned[t]) {
            neg.pin(2 * t, 1.0);
        }
        // Regularization weights, floored at each variable's natural curvature scale.
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let t = i / 2;
                let mu_t = ctx.disc[t] * marginal_utility(ev.c[t], problem.global.gamma);
                let floor = if i % 2 == 0 { mu_t * ev.q[t] } else { mu_t / k[t + 1] };
                neg.get(i, i).abs().max(1e-6 * floor)
            })
            .collect();
        let mut shift = 0.0;
        let step = loop {
            let mut m = neg.clone();
            if shift > 0.0 {
                for i in 0..n {
                    m.add(i, i, shift * diag[i]);
                }
            }
            match m.cholesky_solve(&rhs) {
                Ok(d) => break d,
                Err(_) => {
                    shift = if shift == 0.0 { 1e-8 } else { shift * 10.0 };
                    if shift > 1e12 {
                        break rhs.iter().zip(&diag).map(|(g, d)| g / d).collect();
                    }
                }
            }
        };

        let slope: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();
        let base = ev.welfare;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut mu_new = mu.clone();
            let mut k_new = k.clone();
            for t in 0..h {
                if !pinned[t] {
                    mu_new[t] += alpha * step[2 * t];
                }
                k_new[t + 1] += alpha * step[2 * t + 1];
            }
            if k_new.iter().any(|&x| !(x > 0.0)) {
                alpha *= 0.5;
                continue;
            }
            ctx.project(&mut mu_new, &k_new, &bounds);
            if let Ok(ev_new) = ctx.evaluate(&mu_new, &k_new) {
                let roundoff = 64.0 * f64::EPSILON * base.abs();
                if ev_new.welfare >= base + 1e-4 * alpha * slope.max(0.0) - roundoff {
                    accepted = Some((mu_new, k_new, ev_new));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((m, kk, e)) => {
                let gain = e.welfare - base;
                mu = m;
                k = kk;
                ev = e;
                if gain.abs() <= 64.0 * f64::EPSILON * base.abs() {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
            }
            None => stalled += 1,
        }
        if stalled >= 8 {
            break;
        }
    }

    let (grad, _, raw) = ctx.assemble(&ev, &mu, &k, &bounds);
    residual = residual.min(ctx.kkt_residual(&ev, &k, &grad, &raw, &mu));
    let solution = build_solution(&ctx, &ev, &mu, &k, &bounds, &raw, residual, iterations);
    if residual <= options.tol {
        Ok(solution)
    } else {
        Err(RegionError::MaxIterations {
            region: problem.region.name.clone(),
            iterations,
            residual,
            best: Box::new(RegionSolution { converged: false, ..solution }),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn build_solution(
    ctx: &Ctx,
    ev: &Eval,
    mu: &[f64],
    k: &[f64],
    bounds: &[Bound],
    raw_mu: &[f64],
    residual: f64,
    iterations: usize,
) -> RegionSolution {
    let p = ctx.p;
    let g = &p.global;
    let r = &p.region;
    let h = ctx.h;
    let mut permit_purchase = vec![0.0; h];
    let mut cap_mult = vec![0.0; h];
    let mut cap_k = vec![0.0; h];
    for t in 0..h {
        let mu_t = marginal_utility(ev.c[t], g.gamma);
        cap_k[t] = ctx.disc[t] * mu_t;
        if p.trading {
            let price = p.prices[t];
            permit_purchase[t] = if price > 0.0 { ev.e[t] - r.caps[t] } else { (ev.e[t] - r.caps[t]).max(0.0) };
            cap_mult[t] = price * ctx.disc[t] * mu_t;
        } else if bounds[t] == Bound::Lower && ctx.mu_floor(t, k[t]) > 0.0 {
            let gross = r.intensity[t] * ev.q[t];
            cap_mult[t] = (-raw_mu[t] / gross).max(0.0);
        }
    }
    let trajectory = Trajectory {
        mu: mu.to_vec(),
        permit_purchase,
        investment: ev.inv.clone(),
        consumption: ev.c.clone(),
        capital: k.to_vec(),
        emissions: ev.e.clone(),
        gross_output: ev.q.clone(),
        net_output: ev.y.clone(),
        abatement_cost: ev.phi.clone(),
        cum_emissions: ev.cum.clone(),
        temperature: ev.temp.clone(),
    };
    RegionSolution {
        trajectory,
        welfare: ev.welfare,
        kkt_residual: residual,
        multipliers: Multipliers { cap: cap_mult, capital: cap_k, cum_emissions: ev.lam.clone() },
        iterations,
        converged: residual.is_finite(),
    }
}

/// Discounted welfare of a trajectory, re-evaluated from consumption and the
/// terminal net output only.
pub fn welfare_of(trajectory: &Trajectory, region: &RegionParams, global: &GlobalParams) -> Result<f64, crate::model::ModelError> {
    let h = trajectory.horizon();
    let mut w = 0.0;
    let mut disc = 1.0;
    for t in 0..h {
        w += disc * crate::model::utility(trajectory.consumption[t], global.gamma)? * region.population[t];
        disc *= global.beta;
    }
    let y_term = trajectory.net_output[h];
    let c_term = global.consumption_share_terminal * y_term / region.population[h];
    w += disc * crate::model::utility(c_term, global.gamma)? * region.population[h] / (1.0 - global.beta);
    Ok(w)
}

/// Welfare of a fixed policy (`μ` path and capital path) in the problem's
/// environment; `None` when the policy is infeasible there.
pub fn policy_welfare(problem: &RegionProblem, mu: &[f64], capital: &[f64]) -> Option<f64> {
    let ctx = Ctx::new(problem);
    let mut k = capital.to_vec();
    k[0] = problem.initial_capital;
    ctx.evaluate(mu, &k).ok().map(|e| e.welfare)
}

/// Emissions and permit purchases of a best response, for the update step.
pub fn best_response_emissions(solution: &RegionSolution) -> (Vec<f64>, Vec<f64>) {
    (solution.trajectory.emissions.clone(), solution.trajectory.permit_purchase.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;
    use std::path::Path;

    fn toy_problem(h: usize, i: usize, trading: bool, price: f64) -> RegionProblem {
        let s = ScenarioConfig::toy(h).build(Path::new(".")).unwrap();
        RegionProblem {
            region: s.regions[i].clone(),
            global: s.global.clone(),
            prices: vec![price; h],
            other_emissions: vec![4.0; h],
            initial_capital: s.regions[i].initial_capital,
            initial_cum_emissions: s.initial_cum_emissions(),
            trading,
        }
    }

    fn opts() -> SolverOptions {
        SolverOptions { tol: 1e-9, max_iterations: 400 }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = toy_problem(8, 1, true, 0.3);
        let ctx = Ctx::new(&p);
        let mu: Vec<f64> = (0..8).map(|t| 0.1 + 0.05 * t as f64).collect();
        let k: Vec<f64> = (0..=8).map(|t| p.initial_capital * (1.0 + 0.02 * t as f64)).collect();
        let ev = ctx.evaluate(&mu, &k).unwrap();
        let (grad, _, _) = ctx.assemble(&ev, &mu, &k, &[Bound::Free; 8]);
        for j in 0..16 {
            let (t, is_mu) = (j / 2, j % 2 == 0);
            let step = if is_mu { 1e-6 } else { 1e-6 * k[t + 1] };
            let w = |sign: f64| {
                let (mut m, mut kk) = (mu.clone(), k.clone());
                if is_mu {
                    m[t] += sign * step;
                } else {
                    kk[t + 1] += sign * step;
                }
                ctx.evaluate(&m, &kk).unwrap().welfare
            };
            let fd = (w(1.0) - w(-1.0)) / (2.0 * step);
            assert!((fd - grad[j]).abs() <= 1e-5 * grad[j].abs().max(1e-3), "z[{j}]: fd {fd} vs {}", grad[j]);
        }
    }

    #[test]
    fn two_periods_match_brute_force_grid() {
        let p = toy_problem(2, 0, true, 0.4);
        let sol = solve_region(&p, &opts()).unwrap();
        let k0 = p.initial_capital;
        let n = 30;
        let mu_at = |a: usize| a as f64 / n as f64;
        let k_at = |b: usize| k0 * (0.2 + 1.8 * b as f64 / n as f64);
        let (mut best, mut arg) = (f64::NEG_INFINITY, [0.0; 4]);
        for a0 in 0..=n {
            for a1 in 0..=n {
                for b1 in 0..=n {
                    for b2 in 0..=n {
                        let (m, k) = ([mu_at(a0), mu_at(a1)], [k0, k_at(b1), k_at(b2)]);
                        if let Some(w) = policy_welfare(&p, &m, &k) {
                            if w > best {
                                best = w;
                                arg = [m[0], m[1], k[1], k[2]];
                            }
                        }
                    }
                }
            }
        }
        let tr = &sol.trajectory;
        assert!(sol.welfare >= best, "{} < {best}", sol.welfare);
        let (dm, dk) = (1.0 / n as f64, 1.8 * k0 / n as f64);
        assert!((tr.mu[0] - arg[0]).abs() <= dm && (tr.mu[1] - arg[1]).abs() <= dm, "{:?} vs {arg:?}", tr.mu);
        assert!((tr.capital[1] - arg[2]).abs() <= dk && (tr.capital[2] - arg[3]).abs() <= dk, "{:?} vs {arg:?}", tr.capital);
    }

    #[test]
    fn solution_is_locally_optimal() {
        let p = toy_problem(15, 0, true, 0.5);
        let sol = solve_region(&p, &opts()).unwrap();
        let (mu, k) = (&sol.trajectory.mu, &sol.trajectory.capital);
        let base = policy_welfare(&p, mu, k).unwrap();
        assert!((base - sol.welfare).abs() <= 1e-12 * base.abs());
        for t in 0..15 {
            for d in [-1e-3, 1e-3] {
                let mut m = mu.clone();
                m[t] = (m[t] + d).clamp(0.0, 1.0);
                assert!(policy_welfare(&p, &m, k).unwrap() <= base + 1e-12 * base.abs(), "mu_{t}");
                let mut kk = k.clone();
                kk[t + 1] *= 1.0 + d;
                assert!(policy_welfare(&p, mu, &kk).unwrap() <= base + 1e-12 * base.abs(), "K_{}", t + 1);
            }
        }
    }

    #[test]
    fn zero_cap_without_trading_forces_full_abatement() {
        let mut p = toy_problem(10, 1, false, 0.0);
        p.region.caps = vec![0.0; 10];
        let sol = solve_region(&p, &opts()).unwrap();
        assert!(sol.trajectory.mu.iter().all(|&m| (m - 1.0).abs() < 1e-12), "{:?}", sol.trajectory.mu);
        assert!(sol.trajectory.emissions.iter().all(|&e| e.abs() < 1e-12));
    }

    #[test]
    fn no_damage_no_price_no_binding_cap_means_no_abatement() {
        let mut p = toy_problem(10, 0, true, 0.0);
        p.region.damage = crate::model::DamageParams { pi1: 0.0, pi2: 0.0 };
        p.region.caps = vec![1e3; 10];
        let sol = solve_region(&p, &opts()).unwrap();
        assert!(sol.trajectory.mu.iter().all(|&m| m.abs() < 1e-12), "{:?}", sol.trajectory.mu);
    }

    #[test]
    fn tighter_caps_raise_abatement_and_lower_welfare() {
        let loose = toy_problem(12, 0, false, 0.0);
        let mut tight = loose.clone();
        for c in tight.region.caps.iter_mut() {
            *c *= 0.7;
        }
        let a = solve_region(&loose, &opts()).unwrap();
        let b = solve_region(&tight, &opts()).unwrap();
        assert!(b.welfare <= a.welfare);
        for t in 0..12 {
            assert!(b.trajectory.mu[t] >= a.trajectory.mu[t] - 1e-9, "t={t}");
            assert!(b.trajectory.emissions[t] <= tight.region.caps[t] + 1e-9);
        }
    }

    #[test]
    fn higher_price_raises_abatement() {
        let low = solve_region(&toy_problem(12, 1, true, 0.2), &opts()).unwrap();
        let high = solve_region(&toy_problem(12, 1, true, 0.6), &opts()).unwrap();
        for t in 0..12 {
            assert!(high.trajectory.mu[t] >= low.trajectory.mu[t], "t={t}");
        }
    }

    #[test]
    fn cap_multiplier_is_complementary_to_slack() {
        let p = toy_problem(20, 0, false, 0.0);
        let sol = solve_region(&p, &opts()).unwrap();
        let mut binding = 0;
        for t in 0..20 {
            let slack = p.region.caps[t] - sol.trajectory.emissions[t];
            let m = sol.multipliers.cap[t];
            assert!(m >= 0.0 && slack >= -1e-9, "t={t}");
            if slack > 1e-6 {
                assert_eq!(m, 0.0, "t={t}");
            }
            if m > 0.0 {
                binding += 1;
            }
        }
        assert!(binding > 0 && binding < 20, "toy caps should bind only in later years");
    }

    #[test]
    fn solves_are_deterministic_and_warm_starts_agree() {
        let p = toy_problem(20, 1, true, 0.3);
        let a = solve_region(&p, &opts()).unwrap();
        assert_eq!(a, solve_region(&p, &opts()).unwrap());
        let warm = solve_region_from(&p, &opts(), Some(&WarmStart::from(&a))).unwrap();
        for t in 0..20 {
            assert!((warm.trajectory.mu[t] - a.trajectory.mu[t]).abs() < 1e-8);
        }
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let mut p = toy_problem(5, 0, true, 0.1);
        p.prices.pop();
        assert!(matches!(solve_region(&p, &opts()), Err(RegionError::InvalidProblem { .. })));
    }
}
