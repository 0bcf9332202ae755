//! Helpers shared by the integration tests.
#![allow(dead_code)]

use cfmimo::closed_form_se::SeModel;
use cfmimo::estimation::Kernels;
use cfmimo::hardware::Resolution;
use cfmimo::linalg::{c, cn, diag_from, uniform_phasor, CMat, CVec};
use cfmimo::scenario::{random_covariance, LinkStatistics, Scenario, SystemConfig};
use cfmimo::temporal::AgingProfile;
use cfmimo::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn rel_fro(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Accumulates `E{x yᴴ}` over paired samples.
pub struct CrossCov {
    sum: CMat,
    count: usize,
}

impl CrossCov {
    pub fn new(n: usize) -> Self {
        CrossCov {
            sum: CMat::zeros(n, n),
            count: 0,
        }
    }

    pub fn add(&mut self, x: &[Complex64], y: &[Complex64]) {
        for r in 0..x.len() {
            for c in 0..y.len() {
                self.sum[(r, c)] += x[r] * y[c].conj();
            }
        }
        self.count += 1;
    }

    pub fn mean(&self) -> CMat {
        &self.sum / Complex64::new(self.count as f64, 0.0)
    }
}

/// Random Rician link with `‖h̄‖² + tr(R)` of order `scale·n`.
pub fn random_link<R: Rng>(n: usize, scale: f64, rng: &mut R) -> LinkStatistics {
    let h = CVec::from_fn(n, |_, _| cn(rng, scale));
    let r = random_covariance(n, scale, rng);
    LinkStatistics::from_matrices(h, r)
}

/// Random complex matrix with unit-variance entries.
pub fn random_matrix<R: Rng>(n: usize, rng: &mut R) -> CMat {
    CMat::from_fn(n, n, |_, _| cn(rng, 1.0))
}

/// Random complex vector with unit-norm.
pub fn random_unit_vector<R: Rng>(n: usize, rng: &mut R) -> CVec {
    let v = CVec::from_fn(n, |_, _| cn(rng, 1.0));
    let nrm = v.norm();
    v / Complex64::new(nrm, 0.0)
}

/// Impaired variant of the reference configuration: transmit and receive
/// EVM `kappa` and a per-antenna ADC pattern repeated over all antennas.
pub fn impaired(mut cfg: SystemConfig, kappa: f64, adc_cycle: &[Resolution]) -> SystemConfig {
    cfg.kappa_t = vec![kappa; cfg.k];
    cfg.kappa_r = vec![kappa; cfg.m];
    if !adc_cycle.is_empty() {
        cfg.adc_bits = (0..cfg.m * cfg.n).map(|i| adc_cycle[i % adc_cycle.len()]).collect();
    }
    cfg
}

/// Reference configuration whose UEs alternate between the two speeds
/// (km/h), with a sample time long enough for visible aging.
pub fn aging_config(m: usize, k: usize, n: usize, tau_c: usize, tau_p: usize, seed: u64) -> SystemConfig {
    let mut cfg = SystemConfig::reference(m, k, n, tau_c, tau_p);
    cfg.seed = seed;
    cfg.sample_time = 2e-4;
    cfg.velocities = (0..k).map(|i| if i % 2 == 0 { 15.0 } else { 58.9 }).collect();
    cfg
}

pub fn scenario(cfg: SystemConfig) -> Scenario {
    Scenario::generate(cfg).expect("valid scenario")
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Scenario with random unit-scale links, unit noise and unit pilot and
/// data powers, so moments are well conditioned in tests.
pub fn unit_scenario(mut cfg: SystemConfig, seed: u64) -> Scenario {
    let mut r = rng(seed);
    cfg.noise_power = 1.0;
    cfg.pilot_power = vec![1.0; cfg.k];
    cfg.data_power = vec![1.0; cfg.k];
    cfg.p_max = 1.0;
    let links = (0..cfg.m * cfg.k).map(|_| random_link(cfg.n, 1.0, &mut r)).collect();
    Scenario::from_parts(cfg, links).expect("valid scenario")
}

/// Aging table whose UE `k` decays geometrically with factor `decay[k]`.
pub fn geometric_aging(decay: &[f64], tau_c: usize) -> AgingProfile {
    let rows = decay.iter().map(|&d| (0..=tau_c).map(|l| d.powi(l as i32)).collect()).collect();
    AgingProfile::from_table(rows).expect("valid table")
}

/// Small impaired scenario with co-pilot UEs and visible aging: `k` UEs on
/// `tau_p` pilots, EVM 0.1 and alternating 1-bit and 3-bit ADCs.
pub fn impaired_unit(m: usize, k: usize, n: usize, tau_c: usize, tau_p: usize, seed: u64) -> Scenario {
    let cfg = impaired(SystemConfig::reference(m, k, n, tau_c, tau_p), 0.1, &[Resolution::Bits(1), Resolution::Bits(3)]);
    let mut cfg = cfg;
    cfg.dac_bits = (0..k).map(|i| if i % 2 == 0 { Resolution::Bits(2) } else { Resolution::Ideal }).collect();
    let decay: Vec<f64> = (0..k).map(|i| if i % 2 == 0 { 0.97 } else { 0.9 }).collect();
    unit_scenario(cfg, seed).with_aging(geometric_aging(&decay, tau_c))
}

/// Draws `h̄e^{jφ} + R^{1/2}g` with `r_sqrt` the Hermitian square root of `R`.
pub fn draw(link: &LinkStatistics, r: &mut impl Rng) -> CVec {
    let g = CVec::from_fn(link.n(), |_, _| cn(r, 1.0));
    &link.h_bar * uniform_phasor(r) + &link.r_sqrt * g
}

pub fn random_diag(n: usize, r: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| r.random_range(0.5..1.0)).collect()
}

/// Brute-force `E{Σ_l |(PᴴA h_t)_l|² |h_{n,l}|²}` for two instants that
/// share the anchor with weights `ρ_a`, `ρ_b`.
pub fn diag_moment_mc(link: &LinkStatistics, a: &[f64], p: &CMat, ra: f64, rb: f64, draws: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let pha = p.adjoint() * diag_from(a);
    let (rba, rbb) = ((1.0 - ra * ra).sqrt(), (1.0 - rb * rb).sqrt());
    let mut acc = 0.0;
    for _ in 0..draws {
        let h = draw(link, &mut r);
        let ht = &h * c(ra) + draw(link, &mut r) * c(rba);
        let hn = &h * c(rb) + draw(link, &mut r) * c(rbb);
        let v = &pha * ht;
        acc += (0..link.n()).map(|l| v[l].norm_sqr() * hn[l].norm_sqr()).sum::<f64>();
    }
    acc / draws as f64
}

pub fn quartic_mc(link: &LinkStatistics, a: &[f64], p: &CMat, draws: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = diag_from(a) * p;
    let mut acc = 0.0;
    for _ in 0..draws {
        let h = draw(link, &mut r);
        acc += h.dotc(&(&x * &h)).norm_sqr();
    }
    acc / draws as f64
}

/// Uncorrelated Rayleigh links `R = β I`, ideal hardware, unit noise and the
/// given pilot powers and aging table.
pub fn rayleigh_scenario(m: usize, k: usize, n: usize, tau_c: usize, tau_p: usize, pilot: &[f64], aging: AgingProfile, seed: u64) -> (Scenario, Vec<Vec<f64>>) {
    let mut r = rng(seed);
    let mut s = unit_scenario(SystemConfig::reference(m, k, n, tau_c, tau_p), seed);
    let beta: Vec<Vec<f64>> = (0..m).map(|_| (0..k).map(|_| r.random_range(0.05..2.0)).collect()).collect();
    s.links = (0..m * k)
        .map(|idx| LinkStatistics::from_matrices(CVec::zeros(n), CMat::identity(n, n) * c(beta[idx / k][idx % k])))
        .collect();
    s.config.pilot_power = pilot.to_vec();
    (s.with_aging(aging), beta)
}

pub fn model_with_pilots(s: Scenario) -> SeModel {
    let k = Kernels::with_pilot_power(&s, &s.config.pilot_power.clone()).unwrap();
    SeModel::with_kernels(s, k).unwrap()
}
