//! LMMSE channel estimation at the anchor instant.
//!
//! UE `k` sends its pilot at instant `t_k`; the AP estimates the anchor
//! channel `h[λ]` from the quantized pilot observation
//!
//! `y = A Σ_{i∈P_k} h_i[t_k] x_i + A η + A z + n`.
//!
//! The estimator is `ĥ = α√p̃·ρ[λ−t_k]·R̄ A Ψ y` with `Ψ = Cov(y)⁻¹`.

use num_complex::Complex64;

use crate::linalg::{c, diag_re, hermitian_inverse, hermitian_solve, scale_cols, scale_rows, CMat, CVec};
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Estimator quantities of one AP–UE link.
#[derive(Clone, Debug)]
pub struct EstimationKernel {
    /// `Ψ`, the inverse pilot covariance.
    pub psi: CMat,
    /// Pilot covariance `Ψ⁻¹`.
    pub pilot_cov: CMat,
    /// Linear map from the pilot observation to the estimate.
    pub gain: CMat,
    /// Second moment of the estimate `Γ̄ = E{ĥĥᴴ}`.
    pub gamma_bar: CMat,
    /// `P = α√p̃ρ·Ψ A R̄ A`, so that `ĥᴴ A v = yᴴ P v`.
    pub p: CMat,
    /// Error covariance `R̄ − Γ̄`.
    pub c_err: CMat,
    /// Scalar `α√p̃ρ[λ−t_k]`.
    pub coeff: f64,
}

/// Pilot covariance `Σ_{i∈P_k} α_i(1+κ_i²)p̃_i A R̄_i A + (B + κ_r² A) J + σ² A`
/// seen by AP `m` at UE `k`'s pilot instant.
pub fn pilot_covariance(scn: &Scenario, m: usize, k: usize, pilot_power: &[f64]) -> CMat {
    let hw = &scn.hardware;
    let a = &hw.a[m];
    let b = hw.b(m);
    let kr2 = hw.kappa_r[m] * hw.kappa_r[m];
    let n = scn.n();
    let mut s = CMat::zeros(n, n);
    let mut j = vec![0.0; n];
    for &i in &scn.pilots.groups[k] {
        let w = hw.tx_power_factor(i) * pilot_power[i];
        let rb = &scn.link(m, i).r_bar;
        s += scale_cols(&scale_rows(a, rb), a) * c(w);
        for (jl, d) in j.iter_mut().zip(diag_re(rb)) {
            *jl += w * d;
        }
    }
    for l in 0..n {
        s[(l, l)] += (b[l] + kr2 * a[l]) * j[l] + scn.config.noise_power * a[l];
    }
    s
}

/// `Ψ` for link `(m, k)`.
pub fn compute_psi(scn: &Scenario, m: usize, k: usize, pilot_power: &[f64]) -> Result<CMat> {
    let s = pilot_covariance(scn, m, k, pilot_power);
    hermitian_inverse(&s).map_err(|e| {
        Error::Numerical(format!(
            "pilot covariance of AP {m}, UE {k} is singular (condition {:.3e}): {e}",
            crate::linalg::condition_number(&s)
        ))
    })
}

/// Build the estimator of link `(m, k)`.
pub fn compute_kernel(scn: &Scenario, m: usize, k: usize, pilot_power: &[f64]) -> Result<EstimationKernel> {
    if pilot_power.len() != scn.k() {
        return Err(Error::Domain("one pilot power per UE is required".into()));
    }
    let a = &scn.hardware.a[m];
    let rb = &scn.link(m, k).r_bar;
    let pilot_cov = pilot_covariance(scn, m, k, pilot_power);
    let psi = compute_psi(scn, m, k, pilot_power)?;
    let coeff = scn.hardware.alpha_d[k] * pilot_power[k].sqrt() * scn.aging.rho(k, scn.pilot_lag(k));
    let rb_a = scale_cols(rb, a);
    let gain = &rb_a * &psi * c(coeff);
    let gamma_bar = crate::linalg::hermitian_part(&(&gain * &pilot_cov * gain.adjoint()));
    let p = scale_cols(&gain.adjoint(), a);
    let c_err = crate::linalg::hermitian_part(&(rb - &gamma_bar));
    Ok(EstimationKernel {
        psi,
        pilot_cov,
        gain,
        gamma_bar,
        p,
        c_err,
        coeff,
    })
}

/// Estimators of every link, indexed `m·K + k`.
#[derive(Clone, Debug)]
pub struct Kernels {
    pub pilot_power: Vec<f64>,
    pub links: Vec<EstimationKernel>,
    k: usize,
}

impl Kernels {
    /// Estimators built with the configured pilot powers.
    pub fn new(scn: &Scenario) -> Result<Self> {
        Self::with_pilot_power(scn, &scn.config.pilot_power)
    }

    /// Estimators built with explicit pilot powers.
    pub fn with_pilot_power(scn: &Scenario, pilot_power: &[f64]) -> Result<Self> {
        let mut links = Vec::with_capacity(scn.m() * scn.k());
        for m in 0..scn.m() {
            for k in 0..scn.k() {
                links.push(compute_kernel(scn, m, k, pilot_power)?);
            }
        }
        Ok(Kernels {
            pilot_power: pilot_power.to_vec(),
            links,
            k: scn.k(),
        })
    }

    /// Kernel of link `(m, k)`.
    pub fn get(&self, m: usize, k: usize) -> &EstimationKernel {
        &self.links[m * self.k + k]
    }
}

/// Apply the LMMSE estimator to a received pilot vector.
pub fn lmmse_estimate(kernel: &EstimationKernel, y: &[Complex64]) -> CVec {
    &kernel.gain * CVec::from_column_slice(y)
}

/// Error covariance `R̄ − Γ̄`.
pub fn error_covariance(kernel: &EstimationKernel) -> &CMat {
    &kernel.c_err
}

/// LoS phases of one link at the anchor and at the pilot instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LosPhases {
    pub anchor: Complex64,
    pub pilot: Complex64,
}

/// Estimate that exploits the realized LoS phases of every co-pilot link at
/// AP `m`. Given the phases, the pilot observation has mean
/// `ȳ = Σ_i α_i√p̃_i A h̄_i θ_i` with `θ_i = ρ_i e^{jφ_i^λ} + ρ̄_i e^{jφ_i^t}`,
/// and the estimate is the conditional LMMSE
/// `h̄_k e^{jφ_k^λ} + α√p̃ρ R A Ψ̃ (y − ȳ)`.
///
/// With ideal hardware `Ψ̃` is the usual kernel with `R` in place of `R̄`;
/// with impairments it also carries the phase-dependent distortion power.
pub fn phase_aware_estimate(
    scn: &Scenario,
    m: usize,
    k: usize,
    y: &[Complex64],
    phases: &[LosPhases],
    pilot_power: &[f64],
) -> Result<CVec> {
    let hw = &scn.hardware;
    let n = scn.n();
    let a = &hw.a[m];
    let b = hw.b(m);
    let kr2 = hw.kappa_r[m] * hw.kappa_r[m];
    if phases.len() != scn.k() || y.len() != n {
        return Err(Error::Domain("phase or observation dimension mismatch".into()));
    }
    let mut cov = CMat::zeros(n, n);
    let mut w = vec![0.0; n];
    let mut mean = CVec::zeros(n);
    for &i in &scn.pilots.groups[k] {
        let link = scn.link(m, i);
        let lag = scn.pilot_lag(i);
        let theta = phases[i].anchor * scn.aging.rho(i, lag) + phases[i].pilot * scn.aging.rho_bar(i, lag);
        let alpha = hw.alpha_d[i];
        let pt = pilot_power[i];
        let los = &link.h_bar * theta;
        let spread = alpha * (1.0 - alpha + hw.kappa_t[i] * hw.kappa_t[i]) * pt;
        let block = &link.r * c(hw.tx_power_factor(i) * pt) + (&los * los.adjoint()) * c(spread);
        cov += scale_cols(&scale_rows(a, &block), a);
        for l in 0..n {
            w[l] += hw.tx_power_factor(i) * pt * (los[l].norm_sqr() + link.r[(l, l)].re);
            mean[l] += los[l] * (alpha * pt.sqrt() * a[l]);
        }
    }
    for l in 0..n {
        cov[(l, l)] += (b[l] + kr2 * a[l]) * w[l] + scn.config.noise_power * a[l];
    }
    let resid = CVec::from_column_slice(y) - mean;
    let z = hermitian_solve(&cov, &resid)?;
    let link = scn.link(m, k);
    let coeff = hw.alpha_d[k] * pilot_power[k].sqrt() * scn.aging.rho(k, scn.pilot_lag(k));
    let ra = scale_cols(&link.r, a);
    Ok(&link.h_bar * phases[k].anchor + (ra * z) * c(coeff))
}
