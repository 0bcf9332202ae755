//! Jakes temporal correlation and the anchored channel-aging generator.
//!
//! Every instant is tied to the anchor `λ`:
//! `h[n] = ρ[n−λ]·h[λ] + ρ̄[n−λ]·(h̄·e^{jφⁿ} + f[n])`, with a fresh LoS phase
//! and a fresh innovation `f[n] ~ CN(0, R)` per instant.

use num_complex::Complex64;
use rand::Rng;

use crate::linalg::{cn, uniform_phasor};
use crate::scenario::{LinkStatistics, SystemConfig, SPEED_OF_LIGHT};
use crate::{Error, Result};

/// Zeroth-order Bessel function of the first kind.
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

/// Maximum Doppler shift `v·f_c/c` in Hz.
pub fn doppler(velocity: f64, carrier_freq: f64) -> f64 {
    velocity * carrier_freq / SPEED_OF_LIGHT
}

/// Jakes correlation `J₀(2π f_d T_s Δ)` for a lag of `delta` instants.
pub fn jakes_rho(velocity: f64, carrier_freq: f64, sample_time: f64, delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("lag must be nonnegative, got {delta}")));
    }
    let x = 2.0 * std::f64::consts::PI * doppler(velocity, carrier_freq) * sample_time * delta;
    Ok(bessel_j0(x))
}

/// Correlation coefficients `ρ_k[Δ]` for every UE and lag `0..=τc`.
#[derive(Clone, Debug, PartialEq)]
pub struct AgingProfile {
    rho: Vec<Vec<f64>>,
}

impl AgingProfile {
    /// Tabulate the Jakes coefficients for the UEs of `cfg`.
    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        let rho = cfg
            .velocities
            .iter()
            .map(|&v| {
                (0..=cfg.tau_c)
                    .map(|d| jakes_rho(v, cfg.carrier_freq, cfg.sample_time, d as f64))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AgingProfile { rho })
    }

    /// Profile from explicit tables (one row per UE, indexed by lag).
    pub fn from_table(rho: Vec<Vec<f64>>) -> Result<Self> {
        for row in &rho {
            if row.first().copied() != Some(1.0) || row.iter().any(|r| r.abs() > 1.0) {
                return Err(Error::Domain(
                    "aging table must start at 1 and stay within [-1, 1]".into(),
                ));
            }
        }
        Ok(AgingProfile { rho })
    }

    /// No aging for `k` UEs over lags `0..=tau_c`.
    pub fn static_channel(k: usize, tau_c: usize) -> Self {
        AgingProfile {
            rho: vec![vec![1.0; tau_c + 1]; k],
        }
    }

    /// `ρ_k[Δ]`; the lag sign is irrelevant.
    pub fn rho(&self, k: usize, delta: isize) -> f64 {
        self.rho[k][delta.unsigned_abs()]
    }

    /// `ρ̄_k[Δ] = √(1 − ρ²)`.
    pub fn rho_bar(&self, k: usize, delta: isize) -> f64 {
        let r = self.rho(k, delta);
        (1.0 - r * r).max(0.0).sqrt()
    }

    /// Number of UEs covered.
    pub fn n_ues(&self) -> usize {
        self.rho.len()
    }
}

/// Draw `h[λ] = h̄·e^{jφ} + R^{1/2} g` into `out`.
pub fn sample_anchor_into<R: Rng + ?Sized>(stats: &LinkStatistics, rng: &mut R, out: &mut [Complex64]) {
    let n = out.len();
    let phase = uniform_phasor(rng);
    let mut stack = [Complex64::new(0.0, 0.0); 16];
    let mut heap = Vec::new();
    let g: &mut [Complex64] = if n <= stack.len() {
        &mut stack[..n]
    } else {
        heap.resize(n, Complex64::new(0.0, 0.0));
        &mut heap[..]
    };
    for v in g.iter_mut() {
        *v = cn(rng, 1.0);
    }
    for (l, o) in out.iter_mut().enumerate() {
        let mut acc = stats.h_bar[l] * phase;
        for (j, gj) in g.iter().enumerate() {
            acc += stats.r_sqrt[(l, j)] * gj;
        }
        *o = acc;
    }
}

/// Draw the anchor-instant channel of one link.
pub fn sample_anchor<R: Rng + ?Sized>(stats: &LinkStatistics, rng: &mut R) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); stats.h_bar.len()];
    sample_anchor_into(stats, rng, &mut out);
    out
}

/// Draw the innovation `h̄·e^{jφⁿ} + f[n]`, which has the same law as `h[λ]`.
pub fn sample_innovation_into<R: Rng + ?Sized>(stats: &LinkStatistics, rng: &mut R, out: &mut [Complex64]) {
    sample_anchor_into(stats, rng, out);
}

/// Draw `h[n] = ρ·h[λ] + ρ̄·(h̄·e^{jφⁿ} + f[n])`.
pub fn sample_aged<R: Rng + ?Sized>(
    h_lambda: &[Complex64],
    rho: f64,
    stats: &LinkStatistics,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::Domain(format!("|rho| must not exceed 1, got {rho}")));
    }
    let rho_bar = (1.0 - rho * rho).sqrt();
    let mut innov = vec![Complex64::new(0.0, 0.0); h_lambda.len()];
    if rho_bar > 0.0 {
        sample_innovation_into(stats, rng, &mut innov);
    }
    Ok(h_lambda
        .iter()
        .zip(&innov)
        .map(|(h, f)| h * rho + f * rho_bar)
        .collect())
}
