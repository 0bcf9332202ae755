//! Monte Carlo receive-chain simulation.
//!
//! One trial draws every anchor channel, runs the pilot phase through the
//! full distortion chain, estimates each link from its realized observation
//! and then walks through the data instants. The distortion components are
//! drawn separately, so every interference term is measured on its own.
//!
//! Trials are grouped in shards. Each trial owns a ChaCha8 stream selected by
//! its index, so results do not depend on the shard size or thread count.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::closed_form_se::{sum_se, TermPowers};
use crate::estimation::Kernels;
use crate::hardware::{distort_ap_receive_into, distort_ue_transmit, ApReceive};
use crate::linalg::{CVec, C0};
use crate::scenario::Scenario;
use crate::temporal::{sample_anchor_into, sample_innovation_into};
use crate::{Error, Result};

/// Neumaier compensated sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Running sums for one UE at one data instant.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TermAccumulator {
    /// `α√p·Σ_m a*_m ρ ĥᴴ A h[λ]`, real and imaginary parts.
    pub g_re: KahanSum,
    pub g_im: KahanSum,
    /// Its squared magnitude.
    pub g2: KahanSum,
    pub ca: KahanSum,
    pub iui: Vec<KahanSum>,
    pub dac: KahanSum,
    pub trf: KahanSum,
    pub rrf: KahanSum,
    pub adc: KahanSum,
    pub ns: KahanSum,
}

impl TermAccumulator {
    fn new(k: usize) -> Self {
        TermAccumulator {
            iui: vec![KahanSum::default(); k],
            ..Default::default()
        }
    }

    fn merge(&mut self, o: &TermAccumulator) {
        self.g_re.merge(&o.g_re);
        self.g_im.merge(&o.g_im);
        self.g2.merge(&o.g2);
        self.ca.merge(&o.ca);
        for (a, b) in self.iui.iter_mut().zip(&o.iui) {
            a.merge(b);
        }
        self.dac.merge(&o.dac);
        self.trf.merge(&o.trf);
        self.rrf.merge(&o.rrf);
        self.adc.merge(&o.adc);
        self.ns.merge(&o.ns);
    }
}

/// Accumulated interference terms of every `(k, n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    trials: u64,
    k: usize,
    instants: usize,
    acc: Vec<TermAccumulator>,
}

impl TrialResult {
    /// Empty accumulators for `k` UEs and `instants` data instants.
    pub fn new(k: usize, instants: usize) -> Self {
        TrialResult {
            trials: 0,
            k,
            instants,
            acc: vec![TermAccumulator::new(k); k * instants],
        }
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    /// Combine with the sums of another shard.
    pub fn merge(&mut self, other: &TrialResult) -> Result<()> {
        if self.k != other.k || self.instants != other.instants {
            return Err(Error::Domain("cannot merge results of different shapes".into()));
        }
        self.trials += other.trials;
        for (a, b) in self.acc.iter_mut().zip(&other.acc) {
            a.merge(b);
        }
        Ok(())
    }

    /// Raw accumulator of UE `k` at data-instant index `idx` (`n − λ`).
    pub fn accumulator(&self, k: usize, idx: usize) -> &TermAccumulator {
        &self.acc[k * self.instants + idx]
    }

    /// Sample means of every term of UE `k` at data-instant index `idx`.
    pub fn means(&self, k: usize, idx: usize) -> TermPowers {
        let a = self.accumulator(k, idx);
        let t = self.trials.max(1) as f64;
        let mean = |s: &KahanSum| s.value() / t;
        let g = Complex64::new(mean(&a.g_re), mean(&a.g_im));
        let ds = g.norm_sqr();
        TermPowers {
            ds,
            bu: (mean(&a.g2) - ds).max(0.0),
            ca: mean(&a.ca),
            iui: a.iui.iter().map(mean).collect(),
            dac: mean(&a.dac),
            trf: mean(&a.trf),
            rrf: mean(&a.rrf),
            adc: mean(&a.adc),
            ns: mean(&a.ns),
        }
    }

    /// Ratio of accumulated means, `sinr[k][n−λ]`.
    pub fn empirical_sinr(&self) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|k| {
                (0..self.instants)
                    .map(|i| {
                        let m = self.means(k, i);
                        if m.ds == 0.0 {
                            0.0
                        } else {
                            m.sinr()
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Per-UE and sum SE for a coherence block of `tau_c` instants.
    pub fn empirical_se(&self, tau_c: usize) -> (Vec<f64>, f64) {
        sum_se(tau_c, &self.empirical_sinr())
    }
}

/// Trial count, seed and shard size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    pub trials: usize,
    pub seed: u64,
    pub shard_size: usize,
}

impl McConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        McConfig {
            trials,
            seed,
            shard_size: 256,
        }
    }
}

/// RNG of trial `index` under `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Anchor channels of every link, flat with link `(m, k)` at `(m·K + k)·N`.
pub fn sample_anchors<R: Rng + ?Sized>(scn: &Scenario, rng: &mut R) -> Vec<Complex64> {
    let n = scn.n();
    let mut out = vec![C0; scn.m() * scn.k() * n];
    for (idx, chunk) in out.chunks_mut(n).enumerate() {
        sample_anchor_into(&scn.links[idx], rng, chunk);
    }
    out
}

/// Channels at each UE's own pilot instant, `h[t_k] = ρ[λ−t_k] h[λ] + ρ̄ (fresh)`.
pub fn pilot_channels<R: Rng + ?Sized>(scn: &Scenario, anchors: &[Complex64], rng: &mut R) -> Vec<Complex64> {
    let (n, kn) = (scn.n(), scn.k());
    let mut out = vec![C0; anchors.len()];
    let mut innov = vec![C0; n];
    for (idx, chunk) in out.chunks_mut(n).enumerate() {
        let k = idx % kn;
        let lag = scn.pilot_lag(k);
        let (r, rb) = (scn.aging.rho(k, lag), scn.aging.rho_bar(k, lag));
        if rb > 0.0 {
            sample_innovation_into(&scn.links[idx], rng, &mut innov);
        } else {
            innov.fill(C0);
        }
        for l in 0..n {
            chunk[l] = anchors[idx * n + l] * r + innov[l] * rb;
        }
    }
    out
}

/// Quantized pilot observations, `y[(m·τp + t − 1)·N ..]` for instant `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotObservation {
    pub y: Vec<Complex64>,
    pub tau_p: usize,
}

impl PilotObservation {
    /// Observation of AP `m` at pilot instant `t` (numbered from 1).
    pub fn at(&self, m: usize, t: usize, n: usize) -> &[Complex64] {
        let off = (m * self.tau_p + t - 1) * n;
        &self.y[off..off + n]
    }
}

/// Run the pilot phase: every UE sends a unit pilot through its transmit
/// chain and every AP applies its receive chain at each pilot instant.
pub fn simulate_pilot_phase<R: Rng + ?Sized>(
    scn: &Scenario,
    channels: &[Complex64],
    pilot_power: &[f64],
    rng: &mut R,
) -> Result<PilotObservation> {
    let (mn, kn, n) = (scn.m(), scn.k(), scn.n());
    let tau_p = scn.config.tau_p;
    if channels.len() != mn * kn * n || pilot_power.len() != kn {
        return Err(Error::Domain("pilot-phase dimension mismatch".into()));
    }
    let hw = &scn.hardware;
    let tx: Vec<Complex64> = (0..kn)
        .map(|k| {
            distort_ue_transmit(Complex64::new(1.0, 0.0), pilot_power[k], hw.alpha_d[k], hw.kappa_t[k], rng)
                .map(|x| x.total())
        })
        .collect::<Result<_>>()?;
    let mut y = vec![C0; mn * tau_p * n];
    let mut clean = vec![C0; n];
    let mut w = vec![0.0; n];
    let mut rx = ApReceive::default();
    for m in 0..mn {
        for t in 1..=tau_p {
            clean.fill(C0);
            w.fill(0.0);
            for k in scn.pilots.at_instant(t) {
                let h = &channels[(m * kn + k) * n..(m * kn + k + 1) * n];
                let pw = hw.tx_power_factor(k) * pilot_power[k];
                for l in 0..n {
                    clean[l] += h[l] * tx[k];
                    w[l] += pw * h[l].norm_sqr();
                }
            }
            distort_ap_receive_into(&clean, hw.kappa_r[m], &hw.a[m], &w, scn.config.noise_power, rng, &mut rx)?;
            let off = (m * tau_p + t - 1) * n;
            y[off..off + n].copy_from_slice(&rx.y_adc);
        }
    }
    Ok(PilotObservation { y, tau_p })
}

/// LMMSE estimates of every link from realized observations, flat like the
/// anchors.
pub fn estimate_channels(scn: &Scenario, kernels: &Kernels, obs: &PilotObservation) -> Vec<Complex64> {
    let (mn, kn, n) = (scn.m(), scn.k(), scn.n());
    let mut out = vec![C0; mn * kn * n];
    for m in 0..mn {
        for k in 0..kn {
            let y = obs.at(m, scn.pilots.t[k], n);
            let g = &kernels.get(m, k).gain;
            for r in 0..n {
                let mut acc = C0;
                for l in 0..n {
                    acc += g[(r, l)] * y[l];
                }
                out[(m * kn + k) * n + r] = acc;
            }
        }
    }
    out
}

/// Per-AP combined outputs `s̆_km = ĥ_mkᴴ y_ADC,m` at one data instant, as
/// `out[k][m]`.
pub fn simulate_data_instant<R: Rng + ?Sized>(
    scn: &Scenario,
    channels: &[Complex64],
    estimates: &[Complex64],
    power: &[f64],
    symbols: &[Complex64],
    rng: &mut R,
) -> Result<Vec<Vec<Complex64>>> {
    let (mn, kn, n) = (scn.m(), scn.k(), scn.n());
    if channels.len() != mn * kn * n || estimates.len() != channels.len() || power.len() != kn || symbols.len() != kn {
        return Err(Error::Domain("data-instant dimension mismatch".into()));
    }
    let hw = &scn.hardware;
    let tx: Vec<Complex64> = (0..kn)
        .map(|i| distort_ue_transmit(symbols[i], power[i], hw.alpha_d[i], hw.kappa_t[i], rng).map(|x| x.total()))
        .collect::<Result<_>>()?;
    let mut out = vec![vec![C0; mn]; kn];
    let mut clean = vec![C0; n];
    let mut w = vec![0.0; n];
    let mut rx = ApReceive::default();
    for m in 0..mn {
        clean.fill(C0);
        w.fill(0.0);
        for i in 0..kn {
            let h = &channels[(m * kn + i) * n..(m * kn + i + 1) * n];
            let pw = hw.tx_power_factor(i) * power[i];
            for l in 0..n {
                clean[l] += h[l] * tx[i];
                w[l] += pw * h[l].norm_sqr();
            }
        }
        distort_ap_receive_into(&clean, hw.kappa_r[m], &hw.a[m], &w, scn.config.noise_power, rng, &mut rx)?;
        for (k, row) in out.iter_mut().enumerate() {
            let e = &estimates[(m * kn + k) * n..(m * kn + k + 1) * n];
            row[m] = e.iter().zip(&rx.y_adc).map(|(a, b)| a.conj() * b).sum();
        }
    }
    Ok(out)
}

/// Second-layer combining `Σ_m a*_m s̆_m`.
pub fn lsfd_combine(s: &[Complex64], a: &CVec) -> Complex64 {
    s.iter().zip(a.iter()).map(|(x, w)| w.conj() * x).sum()
}

#[inline]
fn dot_a(e: &[Complex64], h: &[Complex64], a: &[f64]) -> Complex64 {
    let mut acc = C0;
    for l in 0..e.len() {
        acc += e[l].conj() * h[l] * a[l];
    }
    acc
}

struct Ctx<'a> {
    scn: &'a Scenario,
    kernels: &'a Kernels,
    weights: &'a [Vec<CVec>],
    power: &'a [f64],
}

fn run_trial<R: Rng + ?Sized>(ctx: &Ctx, rng: &mut R, acc: &mut TrialResult) -> Result<()> {
    let scn = ctx.scn;
    let hw = &scn.hardware;
    let (mn, kn, n) = (scn.m(), scn.k(), scn.n());
    let sigma2 = scn.config.noise_power;
    let p = ctx.power;

    let anchors = sample_anchors(scn, rng);
    let pilot = pilot_channels(scn, &anchors, rng);
    let obs = simulate_pilot_phase(scn, &pilot, &ctx.kernels.pilot_power, rng)?;
    let est = estimate_channels(scn, ctx.kernels, &obs);
    let slot = |m: usize, k: usize| (m * kn + k) * n..(m * kn + k + 1) * n;
    let xi = |k: usize, i: usize, m: usize| (k * kn + i) * mn + m;

    let mut xl = vec![C0; kn * kn * mn];
    for m in 0..mn {
        for k in 0..kn {
            for i in 0..kn {
                xl[xi(k, i, m)] = dot_a(&est[slot(m, k)], &anchors[slot(m, i)], &hw.a[m]);
            }
        }
    }

    let mut innov = vec![C0; anchors.len()];
    let mut xf = vec![C0; kn * kn * mn];
    let mut w = vec![0.0; n];
    let zeros = vec![C0; n];
    let ones = vec![1.0; n];
    let mut rx = ApReceive::default();
    let mut rrf = vec![C0; kn * mn];
    let mut adc = vec![C0; kn * mn];
    let mut ns = vec![C0; kn * mn];
    let amp: Vec<f64> = (0..kn).map(|i| hw.alpha_d[i] * p[i].sqrt()).collect();

    for (idx, nn) in scn.data_instants().enumerate() {
        let lag = (nn - scn.lambda()) as isize;
        let rho: Vec<f64> = (0..kn).map(|i| scn.aging.rho(i, lag)).collect();
        let rho_bar: Vec<f64> = (0..kn).map(|i| scn.aging.rho_bar(i, lag)).collect();
        for (li, chunk) in innov.chunks_mut(n).enumerate() {
            if rho_bar[li % kn] > 0.0 {
                sample_innovation_into(&scn.links[li], rng, chunk);
            } else {
                chunk.fill(C0);
            }
        }
        for m in 0..mn {
            for k in 0..kn {
                for i in 0..kn {
                    xf[xi(k, i, m)] = dot_a(&est[slot(m, k)], &innov[slot(m, i)], &hw.a[m]);
                }
            }
        }
        let ue: Vec<(Complex64, Complex64)> = (0..kn)
            .map(|i| distort_ue_transmit(C0, p[i], hw.alpha_d[i], hw.kappa_t[i], rng).map(|x| (x.upsilon, x.xi)))
            .collect::<Result<_>>()?;
        for m in 0..mn {
            w.fill(0.0);
            for i in 0..kn {
                let pw = hw.tx_power_factor(i) * p[i];
                let (ha, hf) = (&anchors[slot(m, i)], &innov[slot(m, i)]);
                for l in 0..n {
                    w[l] += pw * (ha[l] * rho[i] + hf[l] * rho_bar[i]).norm_sqr();
                }
            }
            distort_ap_receive_into(&zeros, hw.kappa_r[m], &hw.a[m], &w, sigma2, rng, &mut rx)?;
            for k in 0..kn {
                let e = &est[slot(m, k)];
                rrf[k * mn + m] = dot_a(e, &rx.eta, &hw.a[m]);
                ns[k * mn + m] = dot_a(e, &rx.z, &hw.a[m]);
                adc[k * mn + m] = dot_a(e, &rx.n_adc, &ones);
            }
        }
        for k in 0..kn {
            let a = &ctx.weights[k][idx];
            let comb = |v: &[Complex64]| -> Complex64 { (0..mn).map(|m| a[m].conj() * v[m]).sum() };
            let slot_acc = &mut acc.acc[k * acc.instants + idx];
            let mut gl = C0;
            let mut gca = C0;
            for m in 0..mn {
                gl += a[m].conj() * xl[xi(k, k, m)];
                gca += a[m].conj() * xf[xi(k, k, m)];
            }
            let gl = gl * (rho[k] * amp[k]);
            let gca = gca * (rho_bar[k] * amp[k]);
            slot_acc.g_re.add(gl.re);
            slot_acc.g_im.add(gl.im);
            slot_acc.g2.add(gl.norm_sqr());
            slot_acc.ca.add(gca.norm_sqr());
            let mut dac = C0;
            let mut trf = C0;
            for i in 0..kn {
                let mut s = C0;
                for m in 0..mn {
                    s += a[m].conj() * (xl[xi(k, i, m)] * rho[i] + xf[xi(k, i, m)] * rho_bar[i]);
                }
                if i != k {
                    slot_acc.iui[i].add((s * amp[i]).norm_sqr());
                }
                dac += s * ue[i].0;
                trf += s * ue[i].1;
            }
            slot_acc.dac.add(dac.norm_sqr());
            slot_acc.trf.add(trf.norm_sqr());
            slot_acc.rrf.add(comb(&rrf[k * mn..(k + 1) * mn]).norm_sqr());
            slot_acc.adc.add(comb(&adc[k * mn..(k + 1) * mn]).norm_sqr());
            slot_acc.ns.add(comb(&ns[k * mn..(k + 1) * mn]).norm_sqr());
        }
    }
    acc.trials += 1;
    Ok(())
}

/// Simulate `cfg.trials` trials with fixed weights `weights[k][n−λ]` and
/// powers `power`.
pub fn run_monte_carlo(
    scn: &Scenario,
    kernels: &Kernels,
    weights: &[Vec<CVec>],
    power: &[f64],
    cfg: &McConfig,
) -> Result<TrialResult> {
    let (kn, mn) = (scn.k(), scn.m());
    let instants = scn.data_instants().count();
    if weights.len() != kn || weights.iter().any(|w| w.len() != instants || w.iter().any(|a| a.len() != mn)) {
        return Err(Error::Domain("weights must be given for every UE, data instant and AP".into()));
    }
    if power.len() != kn || power.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Domain("one nonnegative power per UE is required".into()));
    }
    if cfg.trials == 0 || cfg.shard_size == 0 {
        return Err(Error::Domain("trial count and shard size must be positive".into()));
    }
    let ctx = Ctx {
        scn,
        kernels,
        weights,
        power,
    };
    let shards: Vec<(usize, usize)> = (0..cfg.trials)
        .step_by(cfg.shard_size)
        .map(|s| (s, (s + cfg.shard_size).min(cfg.trials)))
        .collect();
    let parts: Vec<TrialResult> = shards
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = TrialResult::new(kn, instants);
            for t in lo..hi {
                let mut rng = trial_rng(cfg.seed, t as u64);
                run_trial(&ctx, &mut rng, &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = TrialResult::new(kn, instants);
    for p in &parts {
        total.merge(p)?;
    }
    Ok(total)
}
