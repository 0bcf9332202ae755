//! Closed-form uplink SINR with two-layer decoding.
//!
//! Every expectation entering the use-and-then-forget bound is reduced to
//! second and fourth moments of the anchored Rician channel. The per-link
//! moments are computed once ([`PairMoments`]); each data instant then only
//! rescales them by the Jakes coefficients, because every term is exactly
//! affine in `ρ_i²[n−λ]`.
//!
//! Term matrices are stored without transmit powers, so the SINR of any
//! power vector is assembled without recomputing moments.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::estimation::Kernels;
use crate::linalg::{c, diag_re, hermitian_solve, quad_form, scale_cols, scale_rows, trace, CMat, CVec, C0};
use crate::scenario::{PilotAssignment, Scenario};
use crate::{Error, Result};

/// `E{hᴴ_t A P diag(h_n h_nᴴ) Pᴴ A h_t}` for two instants `h_t`, `h_n` of one
/// Rician link whose correlation is `ρ_anchor·ρ_age·R̄`.
///
/// Equals `tr(R̄ A P diag(R̄) Pᴴ A) + (ρ_anchor ρ_age)²·(2ℜ tr(h̄h̄ᴴ A P diag(Pᴴ A R)) + tr(R A P diag(Pᴴ A R)))`.
pub fn lemma1_diag_moment(
    r_bar: &CMat,
    h_bar: &CVec,
    r: &CMat,
    a: &[f64],
    p: &CMat,
    rho_anchor: f64,
    rho_age: f64,
) -> Result<f64> {
    let n = h_bar.len();
    if r_bar.shape() != (n, n) || r.shape() != (n, n) || p.shape() != (n, n) || a.len() != n {
        return Err(Error::Domain("dimension mismatch in diagonal moment".into()));
    }
    let ap = scale_rows(a, p);
    let phar = p.adjoint() * scale_rows(a, r);
    let d_rbar: Vec<f64> = diag_re(r_bar);
    let first = trace(&(r_bar * scale_cols(&ap, &d_rbar) * ap.adjoint())).re;
    let d_phar = CMat::from_diagonal(&phar.diagonal());
    let los = trace(&(h_bar * h_bar.adjoint() * &ap * &d_phar)).re;
    let nlos = trace(&(r * &ap * &d_phar)).re;
    let rr = rho_anchor * rho_age;
    Ok(first + rr * rr * (2.0 * los + nlos))
}

/// `E{|hᴴ A P h|²}` for one Rician channel `h = h̄e^{jφ} + R^{1/2}g`.
///
/// Equals `tr(R̄ A P R̄ Pᴴ A) + |tr(R A P)|² + 2ℜ{h̄ᴴ A P h̄ · tr(R Pᴴ A)}`.
pub fn lemma1_quartic_moment(r_bar: &CMat, h_bar: &CVec, r: &CMat, a: &[f64], p: &CMat) -> Result<f64> {
    let n = h_bar.len();
    if r_bar.shape() != (n, n) || r.shape() != (n, n) || p.shape() != (n, n) || a.len() != n {
        return Err(Error::Domain("dimension mismatch in quartic moment".into()));
    }
    let ap = scale_rows(a, p);
    let pha = ap.adjoint();
    let t1 = trace(&(r_bar * &ap * r_bar * &pha)).re;
    let t2 = trace(&(r * &ap)).norm_sqr();
    let t3 = 2.0 * (h_bar.dotc(&(&ap * h_bar)) * trace(&(r * &pha))).re;
    Ok(t1 + t2 + t3)
}

/// Moments of `X = ĥ_mkᴴ A_m h_mi` for one AP `m` and UE pair `(k, i)`.
///
/// Fields with suffix `1` refer to the anchor channel `h_i[λ]`, suffix `0` to
/// an independent innovation with the same law; the channel at instant `n`
/// mixes them with weights `ρ_i²[n−λ]` and `ρ̄_i²[n−λ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMoments {
    /// Whether `k` and `i` share a pilot instant.
    pub copilot: bool,
    /// `E{ĥ_kᴴ A h_i[λ]}`.
    pub mu: Complex64,
    /// `E{|ĥ_kᴴ A h_i[λ]|²}`.
    pub s1: f64,
    /// `E{|ĥ_kᴴ A f_i|²} = tr(Γ̄ A R̄_i A)`.
    pub s0: f64,
    /// Per antenna `E{|ĥ_{k,l}|² |h_{i,l}[λ]|²}`.
    pub t1: Vec<f64>,
    /// Per antenna `Γ̄_ll R̄_{i,ll}`.
    pub t0: Vec<f64>,
}

fn pair_moments(scn: &Scenario, kernels: &Kernels, m: usize, k: usize, i: usize) -> PairMoments {
    let hw = &scn.hardware;
    let n = scn.n();
    let a = &hw.a[m];
    let kern = kernels.get(m, k);
    let gam = &kern.gamma_bar;
    let li = scn.link(m, i);
    let rbi = &li.r_bar;
    let s0 = trace(&(gam * scale_cols(&scale_rows(a, rbi), a))).re;
    let t0: Vec<f64> = (0..n).map(|l| gam[(l, l)].re * rbi[(l, l)].re).collect();
    if !scn.pilots.shares_pilot(k, i) {
        return PairMoments {
            copilot: false,
            mu: C0,
            s1: s0,
            s0,
            t1: t0.clone(),
            t0,
        };
    }
    let b = hw.b(m);
    let kr2 = hw.kappa_r[m] * hw.kappa_r[m];
    let dv: Vec<f64> = (0..n).map(|l| b[l] + kr2 * a[l]).collect();
    let sigma2 = scn.config.noise_power;
    let pp = &kernels.pilot_power;
    let rho_a = scn.aging.rho(i, scn.pilot_lag(i));
    let ra2 = rho_a * rho_a;
    let h = &li.h_bar;
    let r = &li.r;

    let mu = c(kernels.get(m, i).coeff * kern.coeff)
        * trace(&(scale_cols(&scale_rows(a, rbi), a) * scale_cols(&kern.psi, a) * &scn.link(m, k).r_bar));

    let p = &kern.p;
    let mx = scale_rows(a, p);
    let prp = p * rbi * p.adjoint();
    let mut s1 = sigma2 * trace(&(p.adjoint() * scale_rows(a, p) * rbi)).re;
    for &j in &scn.pilots.groups[k] {
        let w3 = hw.tx_power_factor(j) * pp[j];
        let rbj = &scn.link(m, j).r_bar;
        if j != i {
            let f1 = trace(&(rbj * &mx * rbi * mx.adjoint())).re;
            let f2: f64 = (0..n).map(|l| dv[l] * rbj[(l, l)].re * prp[(l, l)].re).sum();
            s1 += w3 * (f1 + f2);
        } else {
            let hmh = h.dotc(&(&mx * h));
            let tmr = trace(&(&mx * r));
            let mh = &mx * h;
            let mhh = mx.adjoint() * h;
            let f1 = hmh.norm_sqr()
                + mh.dotc(&(r * &mh)).re
                + mhh.dotc(&(r * &mhh)).re
                + trace(&(&mx * r * mx.adjoint() * r)).re
                + ra2 * (tmr.norm_sqr() + 2.0 * (hmh * tmr.conj()).re);
            let rph = r * p.adjoint();
            let ph = p * h;
            let pr = p * r;
            let f2: f64 = (0..n)
                .map(|l| {
                    dv[l] * (rbi[(l, l)].re * prp[(l, l)].re
                        + ra2 * (2.0 * (h[l].conj() * rph[(l, l)] * ph[l]).re + pr[(l, l)].norm_sqr()))
                })
                .sum();
            s1 += w3 * (f1 + f2);
        }
    }

    let gh = kern.gain.adjoint();
    let mut t1 = vec![0.0; n];
    for (l, t) in t1.iter_mut().enumerate() {
        let q = gh.column(l).into_owned();
        let aq = CVec::from_iterator(n, (0..n).map(|r_| q[r_] * a[r_]));
        let rbi_ll = rbi[(l, l)].re;
        let mut v = sigma2 * q.dotc(&aq).re * rbi_ll;
        for &j in &scn.pilots.groups[k] {
            let w3 = hw.tx_power_factor(j) * pp[j];
            let rbj = &scn.link(m, j).r_bar;
            if j != i {
                let quad = aq.dotc(&(rbj * &aq)).re;
                let dsum: f64 = (0..n).map(|r_| dv[r_] * q[r_].norm_sqr() * rbj[(r_, r_)].re).sum();
                v += w3 * rbi_ll * (quad + dsum);
            } else {
                let raq = r * &aq;
                let haq = h.dotc(&aq);
                v += w3
                    * (aq.dotc(&(rbi * &aq)).re * rbi_ll
                        + ra2 * (2.0 * (haq * raq[l].conj() * h[l]).re + raq[l].norm_sqr()));
                let dsum: f64 = (0..n)
                    .map(|r_| {
                        dv[r_]
                            * q[r_].norm_sqr()
                            * (rbi[(r_, r_)].re * rbi_ll
                                + ra2 * (2.0 * (h[r_].conj() * r[(r_, l)] * h[l]).re + r[(r_, l)].norm_sqr()))
                    })
                    .sum();
                v += w3 * dsum;
            }
        }
        *t = v;
    }
    PairMoments {
        copilot: true,
        mu,
        s1,
        s0,
        t1,
        t0,
    }
}

/// Power-free term matrices of UE `k` at data instant `n`.
///
/// The combined interference-plus-noise power for weights `a` and powers `p`
/// is `aᴴ Ω a` with
/// `Ω = α_k²p_k(BU + diag(ca)) + Σ_{i≠k} α_i²p_i C_i + Σ_i (1−α_i+κ_i²)α_i p_i C_i
///      + Σ_i p_i diag(d_i + d̄_i) + diag(adc_const) + σ² diag(q)`.
#[derive(Clone, Debug)]
pub struct SeTerms {
    pub k: usize,
    pub n: usize,
    /// `δ_m = ρ_k[n−λ]·tr(A_m Γ̄_mk)`.
    pub delta: CVec,
    /// Beamforming uncertainty kernel (Hermitian). Off-diagonal entries are
    /// nonzero only when the UE's pilot distortion is nonzero, because that
    /// distortion is common to every AP.
    pub bu: CMat,
    /// Channel-aging diagonal `ρ̄_k²[n−λ]·tr(Γ̄ A R̄ A)`.
    pub ca: Vec<f64>,
    /// Interference kernels `C_ki` for every `i`.
    pub c: Vec<CMat>,
    /// Receive-RF diagonals, including `κ_{r,m}²` and `α_i(1+κ_{t,i}²)`.
    pub d: Vec<Vec<f64>>,
    /// ADC diagonals, including `(1+κ_{r,m}²)` and `α_i(1+κ_{t,i}²)`.
    pub dbar: Vec<Vec<f64>>,
    /// `σ²·tr(Γ̄ B)`.
    pub adc_const: Vec<f64>,
    /// `tr(Γ̄ A A)`.
    pub q: Vec<f64>,
    pub sigma2: f64,
    pub alpha_d: Vec<f64>,
    pub kappa_t: Vec<f64>,
}

/// Numerator, denominator and ratio of one SINR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinrParts {
    pub delta: f64,
    pub omega: f64,
    pub sinr: f64,
}

/// Individual interference and noise powers of one `(k, n)` for given
/// weights and powers.
#[derive(Clone, Debug, PartialEq)]
pub struct TermPowers {
    pub ds: f64,
    pub bu: f64,
    pub ca: f64,
    /// Inter-user interference from each UE (entry `k` is zero).
    pub iui: Vec<f64>,
    pub dac: f64,
    pub trf: f64,
    pub rrf: f64,
    pub adc: f64,
    pub ns: f64,
}

impl TermPowers {
    /// Sum of every interference and noise power.
    pub fn denominator(&self) -> f64 {
        self.bu + self.ca + self.iui.iter().sum::<f64>() + self.dac + self.trf + self.rrf + self.adc + self.ns
    }

    /// `DS / denominator`.
    pub fn sinr(&self) -> f64 {
        self.ds / self.denominator()
    }
}

impl SeTerms {
    fn m(&self) -> usize {
        self.delta.len()
    }

    /// `Ω` as an `M×M` Hermitian matrix for powers `p`.
    pub fn omega_matrix(&self, p: &[f64]) -> CMat {
        let m = self.m();
        let k = self.k;
        let ak = self.alpha_d[k];
        let mut om = &self.bu * c(ak * ak * p[k]);
        for (i, ci) in self.c.iter().enumerate() {
            let al = self.alpha_d[i];
            let kt2 = self.kappa_t[i] * self.kappa_t[i];
            let mut w = (1.0 - al + kt2) * al * p[i];
            if i != k {
                w += al * al * p[i];
            }
            if w != 0.0 {
                om += ci * c(w);
            }
        }
        for mm in 0..m {
            let mut diag = ak * ak * p[k] * self.ca[mm] + self.adc_const[mm] + self.sigma2 * self.q[mm];
            for i in 0..self.c.len() {
                diag += p[i] * (self.d[i][mm] + self.dbar[i][mm]);
            }
            om[(mm, mm)] += c(diag);
        }
        crate::linalg::hermitian_part(&om)
    }

    /// `Δ`, `Ω` and their ratio for weights `a` and powers `p`.
    pub fn assemble_sinr(&self, a: &CVec, p: &[f64]) -> Result<SinrParts> {
        if a.iter().all(|x| *x == C0) {
            return Err(Error::Domain("all-zero LSFD weights leave the SINR undefined".into()));
        }
        let ak = self.alpha_d[self.k];
        let delta = ak * ak * p[self.k] * a.dotc(&self.delta).norm_sqr();
        let omega = quad_form(a, &self.omega_matrix(p)).re;
        if !(omega > 0.0) {
            return Err(Error::Invariant(format!("interference-plus-noise power {omega} is not positive")));
        }
        Ok(SinrParts {
            delta,
            omega,
            sinr: delta / omega,
        })
    }

    /// Optimal LSFD weights `Ω⁻¹ δ`.
    pub fn optimal_lsfd(&self, p: &[f64]) -> Result<CVec> {
        hermitian_solve(&self.omega_matrix(p), &self.delta)
    }

    /// Each named term for weights `a` and powers `p`.
    pub fn term_powers(&self, a: &CVec, p: &[f64]) -> TermPowers {
        let k = self.k;
        let ak = self.alpha_d[k];
        let a2: Vec<f64> = a.iter().map(|x| x.norm_sqr()).collect();
        let dot = |v: &[f64]| v.iter().zip(&a2).map(|(x, w)| x * w).sum::<f64>();
        let quad: Vec<f64> = self.c.iter().map(|ci| quad_form(a, ci).re).collect();
        let mut iui = vec![0.0; self.c.len()];
        let (mut dac, mut trf, mut rrf, mut adc) = (0.0, 0.0, 0.0, dot(&self.adc_const));
        for i in 0..self.c.len() {
            let al = self.alpha_d[i];
            if i != k {
                iui[i] = al * al * p[i] * quad[i];
            }
            dac += (1.0 - al) * al * p[i] * quad[i];
            trf += self.kappa_t[i] * self.kappa_t[i] * al * p[i] * quad[i];
            rrf += p[i] * dot(&self.d[i]);
            adc += p[i] * dot(&self.dbar[i]);
        }
        TermPowers {
            ds: ak * ak * p[k] * a.dotc(&self.delta).norm_sqr(),
            bu: ak * ak * p[k] * quad_form(a, &self.bu).re,
            ca: ak * ak * p[k] * dot(&self.ca),
            iui,
            dac,
            trf,
            rrf,
            adc,
            ns: self.sigma2 * dot(&self.q),
        }
    }
}

/// Weighting used at the central processor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// Optimal LSFD weights recomputed for every `(k, n)`.
    Lsfd,
    /// Unit weights (single-layer decoding).
    Sld,
}

/// SINR of every UE and data instant.
#[derive(Clone, Debug, PartialEq)]
pub struct SeReport {
    /// `sinr[k][n − λ]`.
    pub sinr: Vec<Vec<f64>>,
    /// Per-UE SE in bit/s/Hz, each including the `1/τc` prefactor.
    pub per_ue: Vec<f64>,
    /// Sum over UEs.
    pub sum: f64,
}

/// `(1/τc)·Σ_n log₂(1 + SINR)` for every UE, given `sinr[k][n−λ]`.
pub fn sum_se(tau_c: usize, sinr: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let per_ue: Vec<f64> = sinr
        .iter()
        .map(|row| row.iter().map(|s| (1.0 + s).log2()).sum::<f64>() / tau_c as f64)
        .collect();
    let total = per_ue.iter().sum();
    (per_ue, total)
}

/// Closed-form SE engine for one scenario.
#[derive(Clone, Debug)]
pub struct SeModel {
    pub scenario: Scenario,
    pub kernels: Kernels,
    moments: Vec<PairMoments>,
}

impl SeModel {
    /// Build kernels and all pair moments with the configured pilot powers.
    pub fn new(scenario: Scenario) -> Result<Self> {
        let kernels = Kernels::new(&scenario)?;
        Self::with_kernels(scenario, kernels)
    }

    /// Build from precomputed kernels.
    pub fn with_kernels(scenario: Scenario, kernels: Kernels) -> Result<Self> {
        let (m, k) = (scenario.m(), scenario.k());
        let moments = (0..k * k * m)
            .into_par_iter()
            .map(|idx| {
                let mm = idx % m;
                let ki = idx / m;
                pair_moments(&scenario, &kernels, mm, ki / k, ki % k)
            })
            .collect();
        Ok(SeModel {
            scenario,
            kernels,
            moments,
        })
    }

    /// Moments of `ĥ_mkᴴ A_m h_mi`.
    pub fn moments(&self, m: usize, k: usize, i: usize) -> &PairMoments {
        &self.moments[(k * self.scenario.k() + i) * self.scenario.m() + m]
    }

    /// Term matrices of UE `k` at data instant `n` (numbered from 1).
    pub fn terms(&self, k: usize, n: usize) -> Result<SeTerms> {
        let scn = &self.scenario;
        let lambda = scn.lambda();
        if n < lambda || n > scn.config.tau_c {
            return Err(Error::Domain(format!(
                "instant {n} is outside the data phase {lambda}..={}",
                scn.config.tau_c
            )));
        }
        let (mn, kn) = (scn.m(), scn.k());
        let hw = &scn.hardware;
        let lag = (n - lambda) as isize;
        let sigma2 = scn.config.noise_power;
        let rho_k = scn.aging.rho(k, lag);
        let rho_bar_k2 = 1.0 - rho_k * rho_k;

        let mut delta = CVec::zeros(mn);
        let mut ca = vec![0.0; mn];
        let mut adc_const = vec![0.0; mn];
        let mut q = vec![0.0; mn];
        for m in 0..mn {
            let gam = &self.kernels.get(m, k).gamma_bar;
            let a = &hw.a[m];
            let b = hw.b(m);
            let dg = diag_re(gam);
            delta[m] = c(rho_k * dg.iter().zip(a).map(|(g, x)| g * x).sum::<f64>());
            ca[m] = rho_bar_k2 * self.moments(m, k, k).s0;
            adc_const[m] = sigma2 * dg.iter().zip(&b).map(|(g, x)| g * x).sum::<f64>();
            q[m] = dg.iter().zip(a).map(|(g, x)| g * x * x).sum();
        }

        let mut cs = Vec::with_capacity(kn);
        let mut d = Vec::with_capacity(kn);
        let mut dbar = Vec::with_capacity(kn);
        for i in 0..kn {
            let rho_i = scn.aging.rho(i, lag);
            let r2 = rho_i * rho_i;
            let chi = (1.0 + hw.kappa_t[i] * hw.kappa_t[i]) / hw.alpha_d[i];
            let tx = hw.tx_power_factor(i);
            let mut ci = CMat::zeros(mn, mn);
            let mut di = vec![0.0; mn];
            let mut dbi = vec![0.0; mn];
            let mus: Vec<Complex64> = (0..mn).map(|m| self.moments(m, k, i).mu * rho_i).collect();
            for m in 0..mn {
                let pm = self.moments(m, k, i);
                ci[(m, m)] = c(r2 * pm.s1 + (1.0 - r2) * pm.s0);
                if pm.copilot {
                    for m2 in 0..mn {
                        if m2 != m {
                            ci[(m, m2)] = mus[m] * mus[m2].conj() * chi;
                        }
                    }
                }
                let a = &hw.a[m];
                let kr2 = hw.kappa_r[m] * hw.kappa_r[m];
                let (mut sa, mut sb) = (0.0, 0.0);
                for l in 0..a.len() {
                    let t = r2 * pm.t1[l] + (1.0 - r2) * pm.t0[l];
                    sa += a[l] * a[l] * t;
                    sb += a[l] * (1.0 - a[l]) * t;
                }
                di[m] = kr2 * tx * sa;
                dbi[m] = (1.0 + kr2) * tx * sb;
            }
            cs.push(ci);
            d.push(di);
            dbar.push(dbi);
        }

        let ckk = &cs[k];
        let chi_k = (1.0 + hw.kappa_t[k] * hw.kappa_t[k]) / hw.alpha_d[k];
        let mut bu = CMat::zeros(mn, mn);
        for m in 0..mn {
            for m2 in 0..mn {
                bu[(m, m2)] = if m == m2 {
                    c((ckk[(m, m)].re - delta[m].norm_sqr() - ca[m]).max(0.0))
                } else {
                    delta[m] * delta[m2].conj() * (chi_k - 1.0)
                };
            }
        }
        Ok(SeTerms {
            k,
            n,
            delta,
            bu,
            ca,
            c: cs,
            d,
            dbar,
            adc_const,
            q,
            sigma2,
            alpha_d: hw.alpha_d.clone(),
            kappa_t: hw.kappa_t.clone(),
        })
    }

    /// Term matrices for every UE at instant `n`.
    pub fn terms_at(&self, n: usize) -> Result<Vec<SeTerms>> {
        (0..self.scenario.k()).into_par_iter().map(|k| self.terms(k, n)).collect()
    }

    /// Weights of UE `k` at instant `n` under `mode`.
    pub fn weights(&self, terms: &SeTerms, mode: WeightMode, p: &[f64]) -> Result<CVec> {
        match mode {
            WeightMode::Sld => Ok(CVec::from_element(self.scenario.m(), c(1.0))),
            WeightMode::Lsfd => terms.optimal_lsfd(p),
        }
    }

    /// Closed-form SINR of every `(k, n)` and the resulting SE.
    pub fn evaluate(&self, p: &[f64], mode: WeightMode) -> Result<SeReport> {
        let scn = &self.scenario;
        if p.len() != scn.k() {
            return Err(Error::Domain("one power per UE is required".into()));
        }
        let instants: Vec<usize> = scn.data_instants().collect();
        let sinr: Vec<Vec<f64>> = (0..scn.k())
            .into_par_iter()
            .map(|k| {
                instants
                    .iter()
                    .map(|&n| {
                        let t = self.terms(k, n)?;
                        let a = self.weights(&t, mode, p)?;
                        Ok(if p[k] == 0.0 { 0.0 } else { t.assemble_sinr(&a, p)?.sinr })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let (per_ue, sum) = sum_se(scn.config.tau_c, &sinr);
        Ok(SeReport { sinr, per_ue, sum })
    }
}

/// Inputs of the ideal-hardware, uncorrelated Rayleigh SINR.
#[derive(Clone, Debug)]
pub struct RayleighIdealInput<'a> {
    /// `beta[m][k]`.
    pub beta: &'a [Vec<f64>],
    pub pilot_power: &'a [f64],
    pub power: &'a [f64],
    /// `ρ_k[λ − t_k]`.
    pub rho_anchor: &'a [f64],
    /// `ρ_k[n − λ]`.
    pub rho_age: &'a [f64],
    pub pilots: &'a PilotAssignment,
    pub n_antennas: usize,
    pub sigma2: f64,
}

/// SINR of UE `k` for uncorrelated Rayleigh fading (`R = βI`) and ideal
/// hardware, written in scalars:
///
/// `p_k ρ_k² |Σ_m a_m* N γ_mk|² / (Σ_i p_i Σ_m |a_m|² N γ_mk β_mi
///   + Σ_{i∈P_k∖k} p_i ρ_i² |Σ_m a_m* N g_mki|² + σ² Σ_m |a_m|² N γ_mk)`
///
/// with the per-antenna estimate power `γ_mk = p̃_k ρ²[λ−t_k] β_mk² / (Σ_{j∈P_k} p̃_j β_mj + σ²)`
/// and `g_mki = √(p̃_k p̃_i) ρ_k[λ−t_k] ρ_i[λ−t_i] β_mk β_mi / (Σ_{j∈P_k} p̃_j β_mj + σ²)`.
pub fn rayleigh_ideal_sinr(inp: &RayleighIdealInput, a: &[Complex64], k: usize) -> f64 {
    let mn = inp.beta.len();
    let nf = inp.n_antennas as f64;
    let den = |m: usize| {
        inp.pilots.groups[k].iter().map(|&j| inp.pilot_power[j] * inp.beta[m][j]).sum::<f64>() + inp.sigma2
    };
    let cross = |m: usize, i: usize| {
        (inp.pilot_power[k] * inp.pilot_power[i]).sqrt()
            * inp.rho_anchor[k]
            * inp.rho_anchor[i]
            * inp.beta[m][k]
            * inp.beta[m][i]
            / den(m)
    };
    let gamma: Vec<f64> = (0..mn).map(|m| cross(m, k)).collect();
    let mut num = Complex64::new(0.0, 0.0);
    for m in 0..mn {
        num += a[m].conj() * nf * gamma[m];
    }
    let numerator = inp.power[k] * inp.rho_age[k].powi(2) * num.norm_sqr();
    let mut denom = 0.0;
    for i in 0..inp.beta[0].len() {
        for m in 0..mn {
            denom += inp.power[i] * a[m].norm_sqr() * nf * gamma[m] * inp.beta[m][i];
        }
    }
    for &i in &inp.pilots.groups[k] {
        if i == k {
            continue;
        }
        let mut s = Complex64::new(0.0, 0.0);
        for m in 0..mn {
            s += a[m].conj() * nf * cross(m, i);
        }
        denom += inp.power[i] * inp.rho_age[i].powi(2) * s.norm_sqr();
    }
    for m in 0..mn {
        denom += inp.sigma2 * a[m].norm_sqr() * nf * gamma[m];
    }
    numerator / denom
}

/// Classical single-antenna cell-free SINR with unit-modulus pilots, no aging
/// and matched filtering: `p_k (Σγ_mk)² / (Σ_{i∈P_k∖k} p_i (Σ_m γ_mk β_mi/β_mk)²
/// + Σ_i p_i Σ_m γ_mk β_mi + σ² Σ_m γ_mk)`. Assumes equal pilot powers.
pub fn single_antenna_sinr(
    beta: &[Vec<f64>],
    pilot_power: f64,
    power: &[f64],
    pilots: &PilotAssignment,
    sigma2: f64,
    k: usize,
) -> f64 {
    let mn = beta.len();
    let gamma: Vec<f64> = (0..mn)
        .map(|m| {
            let den: f64 = pilots.groups[k].iter().map(|&j| pilot_power * beta[m][j]).sum::<f64>() + sigma2;
            pilot_power * beta[m][k] * beta[m][k] / den
        })
        .collect();
    let sum_gamma: f64 = gamma.iter().sum();
    let mut denom = sigma2 * sum_gamma;
    for i in 0..power.len() {
        denom += power[i] * (0..mn).map(|m| gamma[m] * beta[m][i]).sum::<f64>();
        if i != k && pilots.shares_pilot(k, i) {
            let s: f64 = (0..mn).map(|m| gamma[m] * beta[m][i] / beta[m][k]).sum();
            denom += power[i] * s * s;
        }
    }
    power[k] * sum_gamma * sum_gamma / denom
}

/// Least-squares fit `IUI ≈ e₂ + e₄·ρ²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgingFit {
    pub e2: f64,
    pub e4: f64,
    /// Largest residual relative to the largest observation.
    pub max_rel_residual: f64,
}

/// Fit interference samples `(ρ², IUI)` by an affine law in `ρ²`.
pub fn iui_aging_coefficients(samples: &[(f64, f64)]) -> Result<AgingFit> {
    if samples.is_empty() {
        return Err(Error::Domain("no samples to fit".into()));
    }
    let nf = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / nf;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / nf;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    let e4 = if sxx > 1e-300 { sxy / sxx } else { 0.0 };
    let e2 = my - e4 * mx;
    let scale = samples.iter().map(|s| s.1.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let max_rel_residual = samples
        .iter()
        .map(|s| (s.1 - e2 - e4 * s.0).abs() / scale)
        .fold(0.0, f64::max);
    Ok(AgingFit {
        e2,
        e4,
        max_rel_residual,
    })
}
