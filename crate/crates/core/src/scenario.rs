//! Network geometry and large-scale channel statistics.
//!
//! APs and UEs are dropped uniformly on a square whose edges are wrapped,
//! so every distance is the shortest distance on the torus. Each AP–UE link
//! receives a path loss with log-normal shadowing, a distance-dependent
//! Rician factor, a LoS steering vector and a Gaussian local scattering
//! correlation matrix.

use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::hardware::{HardwareProfile, Resolution};
use crate::linalg::{c, hermitian_part, hermitian_sqrt, trace, CMat, CVec};
use crate::temporal::AgingProfile;
use crate::{Error, Result};

/// Propagation speed used in the Doppler relation.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Convert dBm to watts.
pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Convert a dB ratio to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Convert km/h to m/s.
pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

/// Every parameter of a simulated system, in linear units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of APs.
    pub m: usize,
    /// Number of single-antenna UEs.
    pub k: usize,
    /// Antennas per AP.
    pub n: usize,
    /// Instants per resource block.
    pub tau_c: usize,
    /// Pilot instants.
    pub tau_p: usize,
    /// Side of the square area in meters.
    pub area_side: f64,
    /// System bandwidth in Hz.
    pub bandwidth: f64,
    /// Noise power σ² in W.
    pub noise_power: f64,
    /// Pilot power per UE in W.
    pub pilot_power: Vec<f64>,
    /// Data power per UE in W, used when no allocation is supplied.
    pub data_power: Vec<f64>,
    /// Maximum transmit power in W.
    pub p_max: f64,
    /// UE speeds in m/s.
    pub velocities: Vec<f64>,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
    /// Duration of one instant in s.
    pub sample_time: f64,
    /// Transmit EVM per UE.
    pub kappa_t: Vec<f64>,
    /// Receive EVM per AP.
    pub kappa_r: Vec<f64>,
    /// DAC resolution per UE.
    pub dac_bits: Vec<Resolution>,
    /// ADC resolution per AP antenna, AP-major (length `M·N`).
    pub adc_bits: Vec<Resolution>,
    /// Angular standard deviation of the local scattering in degrees.
    pub asd_deg: f64,
    /// Antenna spacing in wavelengths.
    pub antenna_spacing: f64,
    /// Shadow-fading standard deviation in dB.
    pub shadow_sigma_db: f64,
    /// Seed of the layout and shadowing draws.
    pub seed: u64,
}

impl SystemConfig {
    /// Configuration with the reference parameters of the study and ideal
    /// hardware: a 1 km wrapped square, 20 MHz, σ² = −94 dBm, 10 dBm pilots,
    /// 20 dBm maximum power, 54 km/h, 2 GHz carrier and a 10 µs instant.
    pub fn reference(m: usize, k: usize, n: usize, tau_c: usize, tau_p: usize) -> Self {
        SystemConfig {
            m,
            k,
            n,
            tau_c,
            tau_p,
            area_side: 1000.0,
            bandwidth: 20e6,
            noise_power: dbm_to_watt(-94.0),
            pilot_power: vec![dbm_to_watt(10.0); k],
            data_power: vec![dbm_to_watt(20.0); k],
            p_max: dbm_to_watt(20.0),
            velocities: vec![kmh_to_mps(54.0); k],
            carrier_freq: 2e9,
            sample_time: 1e-5,
            kappa_t: vec![0.0; k],
            kappa_r: vec![0.0; m],
            dac_bits: vec![Resolution::Ideal; k],
            adc_bits: vec![Resolution::Ideal; m * n],
            asd_deg: 30.0,
            antenna_spacing: 0.5,
            shadow_sigma_db: 4.0,
            seed: 0,
        }
    }

    /// Anchor instant `λ = τp + 1` (instants are numbered from 1).
    pub fn lambda(&self) -> usize {
        self.tau_p + 1
    }

    /// Check every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let fail = |p: &str, m: String| Err(Error::config(p, m));
        if self.m == 0 || self.k == 0 || self.n == 0 {
            return fail("m/k/n", "counts must be positive".into());
        }
        if self.tau_p < 1 || self.tau_p >= self.tau_c {
            return fail("tau_p", format!("need 1 <= tau_p < tau_c, got {} and {}", self.tau_p, self.tau_c));
        }
        if !(self.area_side > 0.0) {
            return fail("area_side", "must be positive".into());
        }
        for (name, len, want) in [
            ("pilot_power", self.pilot_power.len(), self.k),
            ("data_power", self.data_power.len(), self.k),
            ("velocities", self.velocities.len(), self.k),
            ("kappa_t", self.kappa_t.len(), self.k),
            ("dac_bits", self.dac_bits.len(), self.k),
            ("kappa_r", self.kappa_r.len(), self.m),
            ("adc_bits", self.adc_bits.len(), self.m * self.n),
        ] {
            if len != want {
                return fail(name, format!("expected {want} entries, got {len}"));
            }
        }
        let nonneg = |v: &[f64]| v.iter().all(|x| *x >= 0.0 && x.is_finite());
        if !nonneg(&self.pilot_power) || !nonneg(&self.data_power) || !(self.p_max >= 0.0) {
            return fail("power", "powers must be finite and nonnegative".into());
        }
        if !(self.noise_power > 0.0) {
            return fail("noise_power", "must be positive".into());
        }
        if !nonneg(&self.kappa_t) || !nonneg(&self.kappa_r) || !nonneg(&self.velocities) {
            return fail("kappa/velocities", "must be finite and nonnegative".into());
        }
        if self.dac_bits.iter().chain(&self.adc_bits).any(|b| *b == Resolution::Bits(0)) {
            return fail("bits", "resolutions must be at least 1 bit".into());
        }
        if !(self.carrier_freq > 0.0) || !(self.sample_time >= 0.0) {
            return fail("carrier_freq/sample_time", "must be positive".into());
        }
        if !(self.asd_deg >= 0.0) || !(self.antenna_spacing > 0.0) || !(self.shadow_sigma_db >= 0.0) {
            return fail("asd_deg/antenna_spacing/shadow_sigma_db", "invalid value".into());
        }
        Ok(())
    }
}

/// AP and UE positions in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub side: f64,
    pub aps: Vec<[f64; 2]>,
    pub ues: Vec<[f64; 2]>,
}

/// Shortest displacement from `a` to `b` on the wrapped square.
pub fn torus_displacement(a: [f64; 2], b: [f64; 2], side: f64) -> [f64; 2] {
    let mut best = [b[0] - a[0], b[1] - a[1]];
    let mut best_d2 = f64::INFINITY;
    for sx in [-1.0, 0.0, 1.0] {
        for sy in [-1.0, 0.0, 1.0] {
            let dx = b[0] + sx * side - a[0];
            let dy = b[1] + sy * side - a[1];
            let d2 = dx * dx + dy * dy;
            if d2 < best_d2 {
                best_d2 = d2;
                best = [dx, dy];
            }
        }
    }
    best
}

/// Distance on the wrapped square: the minimum over the nine shifted copies.
pub fn torus_distance(a: [f64; 2], b: [f64; 2], side: f64) -> f64 {
    let d = torus_displacement(a, b, side);
    d[0].hypot(d[1])
}

/// Drop `M` APs and `K` UEs uniformly on the square.
pub fn generate_layout<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<Layout> {
    if !(cfg.area_side > 0.0) {
        return Err(Error::Domain("area side must be positive".into()));
    }
    let s = cfg.area_side;
    let mut point = || [rng.random::<f64>() * s, rng.random::<f64>() * s];
    let aps = (0..cfg.m).map(|_| point()).collect();
    let ues = (0..cfg.k).map(|_| point()).collect();
    Ok(Layout { side: s, aps, ues })
}

/// Large-scale gain and Rician factor (both linear) at distance `d` meters
/// with shadowing `shadow_db`.
pub fn compute_large_scale(d: f64, shadow_db: f64) -> Result<(f64, f64)> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    let beta_db = -30.9 - 26.0 * d.log10() + shadow_db;
    let k_db = 13.0 - 0.03 * d;
    Ok((db_to_linear(beta_db), db_to_linear(k_db)))
}

/// Unit-diagonal Gaussian local scattering correlation in closed form.
pub fn build_spatial_correlation(aoa: f64, asd_deg: f64, n: usize, spacing: f64) -> CMat {
    let sigma = asd_deg.to_radians();
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = CMat::from_fn(n, n, |l, m| {
        let d = l as f64 - m as f64;
        let phase = two_pi * spacing * d * aoa.sin();
        let spread = two_pi * spacing * d * aoa.cos();
        Complex64::from_polar((-0.5 * sigma * sigma * spread * spread).exp(), phase)
    });
    hermitian_part(&r)
}

/// Gaussian local scattering correlation by numerical integration over the
/// scattering angle (composite Simpson rule on ±10 standard deviations).
pub fn spatial_correlation_integrated(aoa: f64, asd_deg: f64, n: usize, spacing: f64) -> CMat {
    let sigma = asd_deg.to_radians();
    let two_pi = 2.0 * std::f64::consts::PI;
    if sigma == 0.0 {
        return build_spatial_correlation(aoa, 0.0, n, spacing);
    }
    let steps = 20_000usize;
    let lo = -10.0 * sigma;
    let h = 20.0 * sigma / steps as f64;
    CMat::from_fn(n, n, |l, m| {
        let d = l as f64 - m as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for s in 0..=steps {
            let t = lo + s as f64 * h;
            let w = if s == 0 || s == steps {
                1.0
            } else if s % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let pdf = (-0.5 * t * t / (sigma * sigma)).exp() / (sigma * two_pi.sqrt());
            acc += Complex64::from_polar(w * pdf, two_pi * spacing * d * (aoa + t).sin());
        }
        acc * (h / 3.0)
    })
}

/// LoS steering vector with entries `e^{j·i·ψ}`, `i = 0..N`.
pub fn build_los_vector(aoa: f64, n: usize) -> CVec {
    CVec::from_fn(n, |i, _| Complex64::from_polar(1.0, i as f64 * aoa))
}

/// Second-order statistics of one AP–UE link.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkStatistics {
    /// Large-scale gain.
    pub beta: f64,
    /// Rician factor (linear).
    pub rician_k: f64,
    /// Angle of arrival in radians.
    pub aoa: f64,
    /// LoS component `√(Kβ/(K+1))·h̆`.
    pub h_bar: CVec,
    /// NLoS covariance `β/(K+1)·R̆`.
    pub r: CMat,
    /// `R^{1/2}`.
    pub r_sqrt: CMat,
    /// `h̄h̄ᴴ + R`.
    pub r_bar: CMat,
}

impl LinkStatistics {
    /// Statistics from the physical parameters of a link.
    pub fn new(beta: f64, rician_k: f64, aoa: f64, n: usize, asd_deg: f64, spacing: f64) -> Self {
        let r = build_spatial_correlation(aoa, asd_deg, n, spacing) * c(beta / (rician_k + 1.0));
        let h_bar = build_los_vector(aoa, n) * c((rician_k * beta / (rician_k + 1.0)).sqrt());
        let mut s = Self::from_matrices(h_bar, r);
        s.beta = beta;
        s.rician_k = rician_k;
        s.aoa = aoa;
        s
    }

    /// Statistics from an arbitrary LoS vector and NLoS covariance.
    pub fn from_matrices(h_bar: CVec, r: CMat) -> Self {
        let r = hermitian_part(&r);
        let r_bar = hermitian_part(&(&h_bar * h_bar.adjoint() + &r));
        let n = h_bar.len() as f64;
        let tr_r = trace(&r).re;
        LinkStatistics {
            beta: trace(&r_bar).re / n,
            rician_k: if tr_r > 0.0 { h_bar.norm_squared() / tr_r } else { f64::INFINITY },
            aoa: 0.0,
            r_sqrt: hermitian_sqrt(&r),
            h_bar,
            r,
            r_bar,
        }
    }

    /// Antenna count.
    pub fn n(&self) -> usize {
        self.h_bar.len()
    }
}

/// Pilot instants and co-pilot sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PilotAssignment {
    /// Pilot instant of each UE, in `1..=τp`.
    pub t: Vec<usize>,
    /// Co-pilot set of each UE (always contains the UE itself).
    pub groups: Vec<Vec<usize>>,
}

impl PilotAssignment {
    /// Assignment from explicit pilot instants.
    pub fn from_instants(t: Vec<usize>) -> Self {
        let groups = t
            .iter()
            .map(|&tk| (0..t.len()).filter(|&i| t[i] == tk).collect())
            .collect();
        PilotAssignment { t, groups }
    }

    /// Whether UEs `k` and `i` share a pilot instant.
    pub fn shares_pilot(&self, k: usize, i: usize) -> bool {
        self.t[k] == self.t[i]
    }

    /// UEs transmitting at pilot instant `t`.
    pub fn at_instant(&self, t: usize) -> Vec<usize> {
        (0..self.t.len()).filter(|&i| self.t[i] == t).collect()
    }
}

/// Round-robin assignment `t_k = 1 + (k mod τp)` for zero-based `k`.
pub fn assign_pilots(k: usize, tau_p: usize) -> Result<PilotAssignment> {
    if tau_p == 0 {
        return Err(Error::Domain("tau_p must be positive".into()));
    }
    Ok(PilotAssignment::from_instants((0..k).map(|i| 1 + i % tau_p).collect()))
}

/// A fully specified system: configuration, link statistics, pilots,
/// hardware and aging.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: SystemConfig,
    pub layout: Option<Layout>,
    /// Link statistics indexed `m·K + k`.
    pub links: Vec<LinkStatistics>,
    pub pilots: PilotAssignment,
    pub hardware: HardwareProfile,
    pub aging: AgingProfile,
}

impl Scenario {
    /// Drop a random network according to `cfg`.
    pub fn generate(cfg: SystemConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let layout = generate_layout(&cfg, &mut rng)?;
        let shadow = Normal::new(0.0, cfg.shadow_sigma_db)
            .map_err(|e| Error::Domain(format!("shadowing: {e}")))?;
        let mut links = Vec::with_capacity(cfg.m * cfg.k);
        for m in 0..cfg.m {
            for k in 0..cfg.k {
                let disp = torus_displacement(layout.aps[m], layout.ues[k], cfg.area_side);
                let d = disp[0].hypot(disp[1]);
                let (beta, kf) = compute_large_scale(d, shadow.sample(&mut rng))?;
                let aoa = disp[1].atan2(disp[0]);
                links.push(LinkStatistics::new(beta, kf, aoa, cfg.n, cfg.asd_deg, cfg.antenna_spacing));
            }
        }
        let mut s = Self::from_parts(cfg, links)?;
        s.layout = Some(layout);
        Ok(s)
    }

    /// Assemble a scenario from externally supplied link statistics; pilots,
    /// hardware and aging follow from `cfg`.
    pub fn from_parts(cfg: SystemConfig, links: Vec<LinkStatistics>) -> Result<Self> {
        cfg.validate()?;
        if links.len() != cfg.m * cfg.k || links.iter().any(|l| l.n() != cfg.n) {
            return Err(Error::Domain("link statistics do not match M·K links of N antennas".into()));
        }
        let pilots = assign_pilots(cfg.k, cfg.tau_p)?;
        let hardware = HardwareProfile::from_resolutions(
            &cfg.dac_bits,
            &cfg.kappa_t,
            &cfg.kappa_r,
            &cfg.adc_bits,
            cfg.n,
        )?;
        let aging = AgingProfile::from_config(&cfg)?;
        Ok(Scenario {
            config: cfg,
            layout: None,
            links,
            pilots,
            hardware,
            aging,
        })
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    /// Statistics of the link between AP `m` and UE `k`.
    pub fn link(&self, m: usize, k: usize) -> &LinkStatistics {
        &self.links[m * self.config.k + k]
    }

    /// Anchor instant `λ`.
    pub fn lambda(&self) -> usize {
        self.config.lambda()
    }

    /// Data instants `λ..=τc`.
    pub fn data_instants(&self) -> RangeInclusive<usize> {
        self.lambda()..=self.config.tau_c
    }

    /// Lag between UE `k`'s pilot instant and the anchor.
    pub fn pilot_lag(&self, k: usize) -> isize {
        self.lambda() as isize - self.pilots.t[k] as isize
    }

    /// Replace the aging profile (for instance with a hand-made table).
    pub fn with_aging(mut self, aging: AgingProfile) -> Self {
        self.aging = aging;
        self
    }

    /// Replace the hardware profile.
    pub fn with_hardware(mut self, hardware: HardwareProfile) -> Self {
        self.hardware = hardware;
        self
    }
}

/// Random Hermitian PSD matrix helper used by tests and property checks.
pub fn random_covariance<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> CMat {
    let z = DMatrix::from_fn(n, n, |_, _| crate::linalg::cn(rng, 1.0));
    hermitian_part(&(&z * z.adjoint() * c(scale / n as f64)))
}
