//! Bussgang quantization and EVM distortion models.
//!
//! Converters are represented by their Bussgang gain `1 − ι`, where `ι` is
//! the normalized mean-square error of the optimal (Lloyd-Max) quantizer for
//! a unit-variance Gaussian input. Quantization noise is drawn as a Gaussian
//! with the Bussgang covariance so that every distortion term is a second
//! order quantity.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::cn;
use crate::{Error, Result};

/// Converter resolution: a finite number of bits or an ideal converter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    Ideal,
    Bits(u32),
}

impl Serialize for Resolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Resolution::Ideal => s.serialize_str("ideal"),
            Resolution::Bits(b) => s.serialize_u32(*b),
        }
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(b) if b >= 1 => Ok(Resolution::Bits(b as u32)),
            Raw::Num(b) => Err(serde::de::Error::custom(format!(
                "resolution must be at least 1 bit, got {b}"
            ))),
            Raw::Text(t) if t.eq_ignore_ascii_case("ideal") => Ok(Resolution::Ideal),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "resolution must be a bit count or \"ideal\", got \"{t}\""
            ))),
        }
    }
}

/// Normalized distortion `ι(b)` of the Lloyd-Max quantizer for `b = 1..=8`
/// bits. Regenerate with
/// `cargo test -p cfmimo --test hardware -- --ignored --nocapture print_iota_table`.
pub const IOTA_TABLE: [f64; 8] = [
    3.63380227632418620e-1,
    1.17481847829329231e-1,
    3.45477607885037175e-2,
    9.50100800819171989e-3,
    2.50466835567489257e-3,
    6.44239665316887096e-4,
    1.63478229980249385e-4,
    4.11850828673102965e-5,
];

/// Optimal scalar quantizer for a unit-variance Gaussian.
#[derive(Clone, Debug)]
pub struct LloydMax {
    /// Decision thresholds between consecutive levels (length `L − 1`).
    pub thresholds: Vec<f64>,
    /// Reconstruction levels (length `L`).
    pub levels: Vec<f64>,
    /// Mean-square error, which equals `ι` for unit input power.
    pub distortion: f64,
    /// Fixed-point iterations performed.
    pub iterations: usize,
}

fn std_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
}

fn std_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
    }
}

fn std_quantile(u: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if std_cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Run the Lloyd-Max fixed-point iteration for `bits` bits until the levels
/// move by less than `tol`.
pub fn lloyd_max(bits: u32, tol: f64, max_iters: usize) -> Result<LloydMax> {
    if bits == 0 || bits > 16 {
        return Err(Error::Domain(format!("bits must lie in 1..=16, got {bits}")));
    }
    let l = 1usize << bits;
    let mut levels: Vec<f64> = (0..l)
        .map(|i| 3f64.sqrt() * std_quantile((i as f64 + 0.5) / l as f64))
        .collect();
    let mut bounds = vec![0.0; l + 1];
    let mut iterations = 0;
    loop {
        bounds[0] = f64::NEG_INFINITY;
        bounds[l] = f64::INFINITY;
        for i in 1..l {
            bounds[i] = 0.5 * (levels[i - 1] + levels[i]);
        }
        let mut shift: f64 = 0.0;
        for i in 0..l {
            let mass = std_cdf(bounds[i + 1]) - std_cdf(bounds[i]);
            let centroid = (std_pdf(bounds[i]) - std_pdf(bounds[i + 1])) / mass;
            shift = shift.max((centroid - levels[i]).abs());
            levels[i] = centroid;
        }
        iterations += 1;
        if shift < tol || iterations >= max_iters {
            break;
        }
    }
    for i in 1..l {
        bounds[i] = 0.5 * (levels[i - 1] + levels[i]);
    }
    let mut distortion = 0.0;
    for i in 0..l {
        let (lo, hi, y) = (bounds[i], bounds[i + 1], levels[i]);
        let mass = std_cdf(hi) - std_cdf(lo);
        let first = std_pdf(lo) - std_pdf(hi);
        let x_pdf = |x: f64| if x.is_infinite() { 0.0 } else { x * std_pdf(x) };
        let second = mass + x_pdf(lo) - x_pdf(hi);
        distortion += second - 2.0 * y * first + y * y * mass;
    }
    Ok(LloydMax {
        thresholds: bounds[1..l].to_vec(),
        levels,
        distortion,
        iterations,
    })
}

/// Distortion factor `ι` for a converter resolution.
pub fn adc_distortion_factor(res: Resolution) -> Result<f64> {
    match res {
        Resolution::Ideal => Ok(0.0),
        Resolution::Bits(0) => Err(Error::Domain("resolution of 0 bits".into())),
        Resolution::Bits(b) if (b as usize) <= IOTA_TABLE.len() => Ok(IOTA_TABLE[b as usize - 1]),
        Resolution::Bits(b) => Ok(lloyd_max(b, 1e-13, 2_000_000)?.distortion),
    }
}

/// Diagonal of the ADC gain matrix `A = diag(1 − ι(b₁), …, 1 − ι(b_N))`.
pub fn build_adc_matrix(bits: &[Resolution]) -> Result<Vec<f64>> {
    bits.iter().map(|&b| adc_distortion_factor(b).map(|i| 1.0 - i)).collect()
}

/// Impairment parameters of every UE and AP.
#[derive(Clone, Debug, PartialEq)]
pub struct HardwareProfile {
    /// DAC Bussgang gain per UE.
    pub alpha_d: Vec<f64>,
    /// Transmit EVM per UE.
    pub kappa_t: Vec<f64>,
    /// Receive EVM per AP.
    pub kappa_r: Vec<f64>,
    /// ADC gain diagonal per AP.
    pub a: Vec<Vec<f64>>,
}

impl HardwareProfile {
    /// Distortion-free hardware.
    pub fn ideal(m: usize, k: usize, n: usize) -> Self {
        HardwareProfile {
            alpha_d: vec![1.0; k],
            kappa_t: vec![0.0; k],
            kappa_r: vec![0.0; m],
            a: vec![vec![1.0; n]; m],
        }
    }

    /// Build from per-UE DAC resolutions, EVMs and per-antenna ADC resolutions
    /// laid out AP-major (`adc[m·N + l]`).
    pub fn from_resolutions(
        dac: &[Resolution],
        kappa_t: &[f64],
        kappa_r: &[f64],
        adc: &[Resolution],
        n: usize,
    ) -> Result<Self> {
        if dac.len() != kappa_t.len() {
            return Err(Error::Domain("dac_bits and kappa_t lengths differ".into()));
        }
        if adc.len() != kappa_r.len() * n {
            return Err(Error::Domain(format!(
                "adc_bits has {} entries, expected M·N = {}",
                adc.len(),
                kappa_r.len() * n
            )));
        }
        if kappa_t.iter().chain(kappa_r).any(|&v| !(v >= 0.0)) {
            return Err(Error::Domain("EVM values must be nonnegative".into()));
        }
        let alpha_d = dac
            .iter()
            .map(|&b| adc_distortion_factor(b).map(|i| 1.0 - i))
            .collect::<Result<Vec<_>>>()?;
        let a = adc
            .chunks(n)
            .map(build_adc_matrix)
            .collect::<Result<Vec<_>>>()?;
        Ok(HardwareProfile {
            alpha_d,
            kappa_t: kappa_t.to_vec(),
            kappa_r: kappa_r.to_vec(),
            a,
        })
    }

    /// Diagonal of `B_m = A_m(I − A_m)`.
    pub fn b(&self, m: usize) -> Vec<f64> {
        self.a[m].iter().map(|&x| x * (1.0 - x)).collect()
    }

    /// True when every gain is one and every EVM is zero.
    pub fn is_ideal(&self) -> bool {
        self.alpha_d.iter().all(|&x| x == 1.0)
            && self.kappa_t.iter().all(|&x| x == 0.0)
            && self.kappa_r.iter().all(|&x| x == 0.0)
            && self.a.iter().flatten().all(|&x| x == 1.0)
    }

    /// Average radiated power factor `α(1+κ_t²)` of UE `k`.
    pub fn tx_power_factor(&self, k: usize) -> f64 {
        self.alpha_d[k] * (1.0 + self.kappa_t[k] * self.kappa_t[k])
    }
}

/// One impaired UE transmission, split into its components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UeTransmit {
    /// `α√p·s`.
    pub signal: Complex64,
    /// DAC quantization noise `υ`.
    pub upsilon: Complex64,
    /// Transmit RF distortion `ξ`.
    pub xi: Complex64,
}

impl UeTransmit {
    /// Radiated sample `α√p·s + υ + ξ`.
    pub fn total(&self) -> Complex64 {
        self.signal + self.upsilon + self.xi
    }
}

/// Apply the DAC and transmit RF impairments to a unit-power symbol.
pub fn distort_ue_transmit<R: Rng + ?Sized>(
    symbol: Complex64,
    power: f64,
    alpha_d: f64,
    kappa_t: f64,
    rng: &mut R,
) -> Result<UeTransmit> {
    if !(power >= 0.0) {
        return Err(Error::Domain(format!("transmit power must be nonnegative, got {power}")));
    }
    Ok(UeTransmit {
        signal: symbol * (alpha_d * power.sqrt()),
        upsilon: cn(rng, alpha_d * (1.0 - alpha_d) * power),
        xi: cn(rng, kappa_t * kappa_t * alpha_d * power),
    })
}

/// One impaired AP reception, split into its components.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ApReceive {
    /// ADC output `A(y + η + z) + n`.
    pub y_adc: Vec<Complex64>,
    /// Receive RF distortion `η`.
    pub eta: Vec<Complex64>,
    /// Thermal noise `z`.
    pub z: Vec<Complex64>,
    /// ADC quantization noise `n`.
    pub n_adc: Vec<Complex64>,
}

/// Apply receive RF distortion, thermal noise and ADC quantization to the
/// noiseless received vector `y`. `w` is the diagonal of the conditional
/// power `E{y yᴴ | h}`.
pub fn distort_ap_receive<R: Rng + ?Sized>(
    y: &[Complex64],
    kappa_r: f64,
    a: &[f64],
    w: &[f64],
    sigma2: f64,
    rng: &mut R,
) -> Result<ApReceive> {
    let mut out = ApReceive::default();
    distort_ap_receive_into(y, kappa_r, a, w, sigma2, rng, &mut out)?;
    Ok(out)
}

/// Buffer-reusing form of [`distort_ap_receive`].
pub fn distort_ap_receive_into<R: Rng + ?Sized>(
    y: &[Complex64],
    kappa_r: f64,
    a: &[f64],
    w: &[f64],
    sigma2: f64,
    rng: &mut R,
    out: &mut ApReceive,
) -> Result<()> {
    let n = y.len();
    if a.len() != n || w.len() != n {
        return Err(Error::Domain("dimension mismatch in AP receive chain".into()));
    }
    if w.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::Domain("conditional power W must be nonnegative".into()));
    }
    let k2 = kappa_r * kappa_r;
    out.y_adc.clear();
    out.eta.clear();
    out.z.clear();
    out.n_adc.clear();
    for l in 0..n {
        let eta = cn(rng, k2 * w[l]);
        let z = cn(rng, sigma2);
        let b = a[l] * (1.0 - a[l]);
        let q = cn(rng, b * ((1.0 + k2) * w[l] + sigma2));
        out.eta.push(eta);
        out.z.push(z);
        out.n_adc.push(q);
        out.y_adc.push((y[l] + eta + z) * a[l] + q);
    }
    Ok(())
}
