//! Sum-SE power allocation at one data instant.
//!
//! For fixed LSFD weights the desired power of UE `k` is `d_k p_k` and the
//! interference-plus-noise power is `ω0_k + Σ_i ω_ki p_i`. Two
//! minorization-maximization schemes are built on this affine form:
//!
//! * the quadratic-transform surrogate `Σ_k log₂(1 + 2y_k√(d_k p_k) − y_k²Ω_k)`,
//!   maximized by projected gradient ascent;
//! * the Lagrangian-dual plus quadratic-transform surrogate, whose maximizer
//!   over `p` is available in closed form (Algorithm 1).

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::closed_form_se::{SeModel, SeTerms, WeightMode};
use crate::linalg::{quad_form, CVec};
use crate::{Error, Result};

/// Power-affine form of every SINR at one instant for fixed weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineSinrCoeffs {
    /// `Δ_k = d_k p_k`.
    pub d: Vec<f64>,
    /// Power-independent part of `Ω_k`.
    pub omega0: Vec<f64>,
    /// `omega[k][i]`: coefficient of `p_i` in `Ω_k`.
    pub omega: Vec<Vec<f64>>,
    pub p_max: f64,
}

/// Regroup the term matrices of every UE by transmit power.
pub fn extract_affine_coeffs(terms: &[SeTerms], weights: &[CVec], p_max: f64) -> Result<AffineSinrCoeffs> {
    let kn = terms.len();
    if weights.len() != kn {
        return Err(Error::Domain("one weight vector per UE is required".into()));
    }
    if !(p_max > 0.0) {
        return Err(Error::Domain(format!("maximum power must be positive, got {p_max}")));
    }
    let mut d = vec![0.0; kn];
    let mut omega0 = vec![0.0; kn];
    let mut omega = vec![vec![0.0; kn]; kn];
    for (k, (t, a)) in terms.iter().zip(weights).enumerate() {
        if t.k != k || t.c.len() != kn {
            return Err(Error::Domain("terms must be ordered by UE".into()));
        }
        let a2: Vec<f64> = a.iter().map(|x| x.norm_sqr()).collect();
        let dot = |v: &[f64]| v.iter().zip(&a2).map(|(x, w)| x * w).sum::<f64>();
        let ak = t.alpha_d[k];
        d[k] = ak * ak * a.dotc(&t.delta).norm_sqr();
        omega0[k] = dot(&t.adc_const) + t.sigma2 * dot(&t.q);
        for i in 0..kn {
            let al = t.alpha_d[i];
            let kt2 = t.kappa_t[i] * t.kappa_t[i];
            let ci = quad_form(a, &t.c[i]).re;
            let mut w = (1.0 - al + kt2) * al * ci + dot(&t.d[i]) + dot(&t.dbar[i]);
            if i == k {
                w += ak * ak * (quad_form(a, &t.bu).re + dot(&t.ca));
            } else {
                w += al * al * ci;
            }
            omega[k][i] = w;
        }
    }
    Ok(AffineSinrCoeffs { d, omega0, omega, p_max })
}

impl AffineSinrCoeffs {
    pub fn k(&self) -> usize {
        self.d.len()
    }

    pub fn delta(&self, p: &[f64], k: usize) -> f64 {
        self.d[k] * p[k]
    }

    pub fn omega_at(&self, p: &[f64], k: usize) -> f64 {
        self.omega0[k] + self.omega[k].iter().zip(p).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn sinr(&self, p: &[f64], k: usize) -> f64 {
        let dl = self.delta(p, k);
        if dl == 0.0 {
            0.0
        } else {
            dl / self.omega_at(p, k)
        }
    }

    /// `Σ_k log₂(1 + SINR_k)`.
    pub fn objective(&self, p: &[f64]) -> f64 {
        (0..self.k()).map(|k| (1.0 + self.sinr(p, k)).log2()).sum()
    }

    /// Gradient of [`Self::objective`] with respect to `p`.
    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let kn = self.k();
        let mut g = vec![0.0; kn];
        for k in 0..kn {
            let om = self.omega_at(p, k);
            let tot = om + self.delta(p, k);
            for (j, gj) in g.iter_mut().enumerate() {
                let own = if j == k { self.d[k] } else { 0.0 };
                *gj += ((self.omega[k][j] + own) / tot - self.omega[k][j] / om) / LN_2;
            }
        }
        g
    }

    /// Projected-gradient residual `‖Π(u + ∇_u f) − u‖` in the normalised
    /// variable `u = p / P_max`; zero exactly at KKT points of the box problem.
    pub fn kkt_residual(&self, p: &[f64]) -> f64 {
        let pm = self.p_max;
        self.gradient(p)
            .iter()
            .zip(p)
            .map(|(g, x)| {
                let u = x / pm;
                ((u + pm * g).clamp(0.0, 1.0) - u).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Stopping rule shared by both outer loops: the normalised step
    /// `‖Δp‖² / P_max²` is at most `tol` and the KKT residual at most `√tol`.
    fn settled(&self, prev: &[f64], next: &[f64], tol: f64) -> bool {
        sq_dist(prev, next) <= tol * self.p_max * self.p_max && self.kkt_residual(next) <= tol.sqrt()
    }
}

/// `y_k = √Δ_k / Ω_k`, which makes the quadratic-transform surrogate tight.
pub fn y_update(p: &[f64], c: &AffineSinrCoeffs) -> Vec<f64> {
    (0..c.k()).map(|k| c.delta(p, k).sqrt() / c.omega_at(p, k)).collect()
}

/// `y_k = √(Δ_k(1+γ_k)) / (Δ_k + Ω_k)` for the dual-transform surrogate.
pub fn y_update_dual(p: &[f64], c: &AffineSinrCoeffs, gamma: &[f64]) -> Vec<f64> {
    (0..c.k())
        .map(|k| {
            let dl = c.delta(p, k);
            (dl * (1.0 + gamma[k])).sqrt() / (dl + c.omega_at(p, k))
        })
        .collect()
}

/// `γ_k = Δ_k / Ω_k`.
pub fn gamma_update(p: &[f64], c: &AffineSinrCoeffs) -> Vec<f64> {
    (0..c.k()).map(|k| c.sinr(p, k)).collect()
}

/// Optimal dual variable `Ω / ((Δ + Ω) ln 2)`.
pub fn lambda_star(p: &[f64], c: &AffineSinrCoeffs, k: usize) -> f64 {
    let om = c.omega_at(p, k);
    om / ((c.delta(p, k) + om) * LN_2)
}

/// `Σ_k log₂(1 + 2y_k√Δ_k − y_k²Ω_k)`, or `−∞` when an argument is not positive.
pub fn surrogate_value(p: &[f64], y: &[f64], c: &AffineSinrCoeffs) -> f64 {
    let mut s = 0.0;
    for k in 0..c.k() {
        let arg = 1.0 + 2.0 * y[k] * c.delta(p, k).sqrt() - y[k] * y[k] * c.omega_at(p, k);
        if !(arg > 0.0) {
            return f64::NEG_INFINITY;
        }
        s += arg.log2();
    }
    s
}

/// Dual-transform surrogate
/// `Σ_k [ln(1+γ_k) − γ_k + 2y_k√((1+γ_k)Δ_k) − y_k²(Δ_k + Ω_k)] / ln 2`.
pub fn surrogate_value_dual(p: &[f64], y: &[f64], gamma: &[f64], c: &AffineSinrCoeffs) -> f64 {
    (0..c.k())
        .map(|k| {
            let dl = c.delta(p, k);
            ((1.0 + gamma[k]).ln() - gamma[k] + 2.0 * y[k] * ((1.0 + gamma[k]) * dl).sqrt()
                - y[k] * y[k] * (dl + c.omega_at(p, k)))
                / LN_2
        })
        .sum()
}

/// Closed-form maximizer of the dual-transform surrogate:
/// `p_k = min(P_max, y_k²(1+γ_k)d_k / (y_k²d_k + l_k)²)` with
/// `l_k = Σ_j y_j² ω_jk`. A zero denominator yields `P_max`.
pub fn closed_form_power_update(y: &[f64], gamma: &[f64], c: &AffineSinrCoeffs) -> Vec<f64> {
    let kn = c.k();
    (0..kn)
        .map(|k| {
            let l: f64 = (0..kn).map(|j| y[j] * y[j] * c.omega[j][k]).sum();
            let den = y[k] * y[k] * c.d[k] + l;
            if den <= 0.0 {
                c.p_max
            } else {
                (y[k] * y[k] * (1.0 + gamma[k]) * c.d[k] / (den * den)).min(c.p_max)
            }
        })
        .collect()
}

/// Power vector with its objective trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p: Vec<f64>,
    /// Objective at the start and after every iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn check_start(c: &AffineSinrCoeffs, p0: &[f64]) -> Result<()> {
    if p0.len() != c.k() {
        return Err(Error::Domain("one initial power per UE is required".into()));
    }
    if p0.iter().any(|&x| !(0.0..=c.p_max).contains(&x)) {
        return Err(Error::Domain("initial powers must lie in [0, P_max]".into()));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Closed-form MM: alternate the `(γ, y)` and `p` updates until
/// `‖p⁽ⁱ⁺¹⁾ − p⁽ⁱ⁾‖² ≤ tol · P_max²` and the KKT residual is at most `√tol`.
pub fn run_algorithm1(c: &AffineSinrCoeffs, p0: &[f64], max_iters: usize, tol: f64) -> Result<PowerAllocation> {
    check_start(c, p0)?;
    let mut p = p0.to_vec();
    let mut history = vec![c.objective(&p)];
    for it in 1..=max_iters {
        let gamma = gamma_update(&p, c);
        let y = y_update_dual(&p, c, &gamma);
        let next = closed_form_power_update(&y, &gamma, c);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("closed-form power update is not finite".into()));
        }
        let done = c.settled(&p, &next, tol);
        p = next;
        history.push(c.objective(&p));
        if done {
            return Ok(PowerAllocation {
                p,
                history,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(PowerAllocation {
        p,
        history,
        iterations: max_iters,
        converged: false,
    })
}

/// Projected-gradient settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgSettings {
    pub tol: f64,
    pub max_iters: usize,
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo: f64,
}

impl Default for PgSettings {
    fn default() -> Self {
        PgSettings {
            tol: 1e-10,
            max_iters: 20_000,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
        }
    }
}

/// Result of one projected-gradient solve.
#[derive(Clone, Debug, PartialEq)]
pub struct PgOutcome {
    pub p: Vec<f64>,
    /// Surrogate value after every accepted step, starting at `p0`.
    pub values: Vec<f64>,
    /// Norm of the projected-gradient step at termination.
    pub stationarity: f64,
    pub iterations: usize,
}

/// Maximize the quadratic-transform surrogate over `[0, P_max]^K` for fixed
/// `y`. The search runs in `x = √(p/P_max) ∈ [0, 1]^K`, where the gradient
/// stays finite at zero power.
pub fn solve_p2_projected_gradient(
    c: &AffineSinrCoeffs,
    y: &[f64],
    p0: &[f64],
    s: &PgSettings,
) -> Result<PgOutcome> {
    check_start(c, p0)?;
    let kn = c.k();
    let pm = c.p_max;
    let to_p = |x: &[f64]| x.iter().map(|v| pm * v * v).collect::<Vec<f64>>();
    let value = |x: &[f64]| surrogate_value(&to_p(x), y, c);
    let grad = |x: &[f64]| -> Result<Vec<f64>> {
        let p = to_p(x);
        let mut g = vec![0.0; kn];
        for k in 0..kn {
            let sd = (c.d[k] * pm).sqrt();
            let u = 1.0 + 2.0 * y[k] * sd * x[k] - y[k] * y[k] * c.omega_at(&p, k);
            g[k] += 2.0 * y[k] * sd / (u * LN_2);
            for (j, gj) in g.iter_mut().enumerate() {
                *gj -= y[k] * y[k] * c.omega[k][j] * 2.0 * pm * x[j] / (u * LN_2);
            }
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("surrogate gradient is not finite".into()));
        }
        Ok(g)
    };
    let proj = |v: f64| v.clamp(0.0, 1.0);
    let mut x: Vec<f64> = p0.iter().map(|v| (v / pm).sqrt()).collect();
    let mut f = value(&x);
    if !f.is_finite() {
        return Err(Error::Numerical("surrogate undefined at the starting point".into()));
    }
    let mut values = vec![f];
    let mut stationarity = f64::INFINITY;
    let mut iterations = 0;
    while iterations < s.max_iters {
        let g = grad(&x)?;
        stationarity = x
            .iter()
            .zip(&g)
            .map(|(xi, gi)| (proj(xi + gi) - xi).powi(2))
            .sum::<f64>()
            .sqrt();
        if stationarity <= s.tol {
            break;
        }
        iterations += 1;
        let mut t = s.initial_step;
        let mut accepted = false;
        while t > 1e-20 {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| proj(xi + t * gi)).collect();
            let fc = value(&cand);
            let lin: f64 = g.iter().zip(cand.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if lin <= 0.0 {
                break;
            }
            if fc.is_finite() && (fc - f).abs() <= 8.0 * f64::EPSILON * f.abs().max(1.0) {
                // Values agree to rounding: the directional derivative at the
                // candidate decides whether the step overshot the maximum.
                let gc = grad(&cand)?;
                let ahead: f64 = gc.iter().zip(cand.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
                if ahead >= 0.0 {
                    x = cand;
                    f = fc;
                    values.push(f);
                    accepted = true;
                    break;
                }
            } else if fc.is_finite() && fc >= f + s.armijo * lin {
                x = cand;
                f = fc;
                values.push(f);
                accepted = true;
                break;
            }
            t *= s.shrink;
        }
        if !accepted {
            break;
        }
    }
    Ok(PgOutcome {
        p: to_p(&x),
        values,
        stationarity,
        iterations,
    })
}

/// Outer MM loop around [`solve_p2_projected_gradient`].
pub fn run_mm_pg(
    c: &AffineSinrCoeffs,
    p0: &[f64],
    max_iters: usize,
    tol: f64,
    s: &PgSettings,
) -> Result<PowerAllocation> {
    check_start(c, p0)?;
    let mut p = p0.to_vec();
    let mut history = vec![c.objective(&p)];
    for it in 1..=max_iters {
        let y = y_update(&p, c);
        let next = solve_p2_projected_gradient(c, &y, &p, s)?.p;
        let done = c.settled(&p, &next, tol);
        p = next;
        history.push(c.objective(&p));
        if done {
            return Ok(PowerAllocation {
                p,
                history,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(PowerAllocation {
        p,
        history,
        iterations: max_iters,
        converged: false,
    })
}

/// Every UE at `P_max`.
pub fn full_power(k: usize, p_max: f64) -> Vec<f64> {
    vec![p_max; k]
}

/// Power-update scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ClosedForm,
    ProjectedGradient,
}

/// Outer-loop settings shared by both schemes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub algorithm: Algorithm,
    pub max_iters: usize,
    pub tol: f64,
    pub pg: PgSettings,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            algorithm: Algorithm::ClosedForm,
            max_iters: 5000,
            tol: 1e-8,
            pg: PgSettings::default(),
        }
    }
}

/// Run the selected scheme from `p0`.
pub fn optimize_powers(c: &AffineSinrCoeffs, p0: &[f64], s: &OptimizerSettings) -> Result<PowerAllocation> {
    match s.algorithm {
        Algorithm::ClosedForm => run_algorithm1(c, p0, s.max_iters, s.tol),
        Algorithm::ProjectedGradient => run_mm_pg(c, p0, s.max_iters, s.tol, &s.pg),
    }
}

/// Outcome of alternating weight and power updates.
#[derive(Clone, Debug, PartialEq)]
pub struct Alternation {
    pub p: Vec<f64>,
    /// Weights used in the last power optimization.
    pub weights: Vec<CVec>,
    /// Objective at instant `n_opt` after each power optimization.
    pub round_objective: Vec<f64>,
    pub allocations: Vec<PowerAllocation>,
}

/// Optimize powers at instant `n_opt` starting from `P_max/2`.
///
/// With [`WeightMode::Lsfd`] the weights start at the optimal ones for the
/// initial powers; each of the `rounds` extra rounds recomputes them at the
/// current powers and optimizes the powers again. With [`WeightMode::Sld`]
/// the weights are all ones and `rounds` is ignored.
pub fn alternate_with_lsfd(
    model: &SeModel,
    n_opt: usize,
    rounds: usize,
    mode: WeightMode,
    s: &OptimizerSettings,
) -> Result<Alternation> {
    let scn = &model.scenario;
    let p_max = scn.config.p_max;
    let terms = model.terms_at(n_opt)?;
    let weights_for = |p: &[f64]| -> Result<Vec<CVec>> { terms.iter().map(|t| model.weights(t, mode, p)).collect() };
    let mut p = vec![p_max / 2.0; scn.k()];
    let mut weights = weights_for(&p)?;
    let mut round_objective = Vec::new();
    let mut allocations = Vec::new();
    let total = if mode == WeightMode::Lsfd { rounds + 1 } else { 1 };
    for r in 0..total {
        if r > 0 {
            weights = weights_for(&p)?;
        }
        let c = extract_affine_coeffs(&terms, &weights, p_max)?;
        let alloc = optimize_powers(&c, &p, s)?;
        p = alloc.p.clone();
        round_objective.push(c.objective(&p));
        allocations.push(alloc);
    }
    Ok(Alternation {
        p,
        weights,
        round_objective,
        allocations,
    })
}
