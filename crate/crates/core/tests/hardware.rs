mod common;

use cfmimo::hardware::*;
use cfmimo::Complex64;
use common::{rel, rng};

#[test]
fn ideal_converter_has_no_distortion() {
    assert_eq!(adc_distortion_factor(Resolution::Ideal).unwrap(), 0.0);
    assert_eq!(build_adc_matrix(&[Resolution::Ideal; 4]).unwrap(), vec![1.0; 4]);
    assert!(adc_distortion_factor(Resolution::Bits(0)).is_err());
}

#[test]
fn one_bit_distortion_is_analytic() {
    let iota = adc_distortion_factor(Resolution::Bits(1)).unwrap();
    assert!((iota - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-15);
    let lm = lloyd_max(1, 1e-14, 10_000).unwrap();
    assert!((lm.distortion - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-14);
    assert!((lm.levels[1] - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
}

#[test]
fn four_bit_distortion() {
    let iota = adc_distortion_factor(Resolution::Bits(4)).unwrap();
    assert!((iota - 0.0095).abs() < 5e-5, "got {iota}");
}

#[test]
fn table_matches_lloyd_max_iteration() {
    for b in 1..=6u32 {
        let lm = lloyd_max(b, 1e-13, 5_000_000).unwrap();
        let table = IOTA_TABLE[b as usize - 1];
        assert!(rel(lm.distortion, table) < 1e-9, "b = {b}: {} vs {table}", lm.distortion);
        assert_eq!(lm.levels.len(), 1 << b);
        assert!(lm.levels.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn distortion_decreases_with_resolution() {
    assert!(IOTA_TABLE.windows(2).all(|w| w[1] < w[0]));
    let nine = adc_distortion_factor(Resolution::Bits(9)).unwrap();
    assert!(nine < IOTA_TABLE[7] && nine > 0.0);
}

/// Regenerates the embedded table; prints one line per resolution.
#[test]
#[ignore]
fn print_iota_table() {
    for b in 1..=8u32 {
        let lm = lloyd_max(b, 1e-13, 5_000_000).unwrap();
        println!("{b} {:.17e} ({} iterations)", lm.distortion, lm.iterations);
    }
}

#[test]
fn mixed_adc_pattern() {
    let a = build_adc_matrix(&[Resolution::Bits(1), Resolution::Bits(1), Resolution::Ideal, Resolution::Ideal]).unwrap();
    let g = 2.0 / std::f64::consts::PI;
    assert!((a[0] - g).abs() < 1e-15 && (a[1] - g).abs() < 1e-15);
    assert!((a[0] - 0.6366).abs() < 1e-4);
    assert_eq!(&a[2..], &[1.0, 1.0]);
    let u = build_adc_matrix(&[Resolution::Bits(3); 5]).unwrap();
    assert!(u.iter().all(|&x| x == u[0]));
}

#[test]
fn profile_invariants() {
    let bits = [Resolution::Bits(1), Resolution::Bits(2), Resolution::Bits(4), Resolution::Ideal];
    let hw = HardwareProfile::from_resolutions(&[Resolution::Bits(3), Resolution::Ideal], &[0.1, 0.0], &[0.05], &bits, 4).unwrap();
    for &x in &hw.a[0] {
        assert!(x > 0.0 && x <= 1.0);
    }
    for x in hw.b(0) {
        assert!((0.0..=0.25).contains(&x));
    }
    assert_eq!(hw.b(0)[3], 0.0);
    assert!(!hw.is_ideal());
    assert!((hw.tx_power_factor(0) - hw.alpha_d[0] * 1.01).abs() < 1e-15);
    let ideal = HardwareProfile::ideal(2, 3, 4);
    assert!(ideal.is_ideal());
    assert!(ideal.b(1).iter().all(|&x| x == 0.0));
    assert!(HardwareProfile::from_resolutions(&[Resolution::Ideal], &[0.0], &[0.0], &bits[..3], 4).is_err());
    assert!(HardwareProfile::from_resolutions(&[Resolution::Ideal], &[-0.1], &[0.0], &bits, 4).is_err());
}

#[test]
fn ideal_transmitter_is_a_scaled_symbol() {
    let mut r = rng(1);
    let s = Complex64::new(0.6, -0.8);
    let t = distort_ue_transmit(s, 2.0, 1.0, 0.0, &mut r).unwrap();
    assert_eq!(t.total(), s * 2f64.sqrt());
    let z = distort_ue_transmit(s, 0.0, 0.7, 0.2, &mut r).unwrap();
    assert_eq!(z.total(), Complex64::new(0.0, 0.0));
    assert!(distort_ue_transmit(s, -1.0, 1.0, 0.0, &mut r).is_err());
}

#[test]
fn transmit_variance_matches_bussgang_power() {
    let mut r = rng(2);
    let (alpha, kappa, p) = (0.88, 0.15, 0.3);
    let s = Complex64::new(1.0, 0.0);
    let trials = 100_000;
    let mut power = 0.0;
    let mut cross = Complex64::new(0.0, 0.0);
    for _ in 0..trials {
        let t = distort_ue_transmit(s, p, alpha, kappa, &mut r).unwrap();
        power += t.total().norm_sqr();
        cross += t.upsilon * t.xi.conj();
    }
    let want = alpha * (1.0 + kappa * kappa) * p;
    assert!(rel(power / trials as f64, want) < 0.02);
    assert!((cross / trials as f64).norm() < 5.0 * (alpha * (1.0 - alpha) * p * kappa * kappa * alpha * p).sqrt() / (trials as f64).sqrt());
}

#[test]
fn ideal_receiver_adds_only_thermal_noise() {
    let mut r = rng(3);
    let y = vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.1)];
    let out = distort_ap_receive(&y, 0.0, &[1.0, 1.0], &[5.0, 0.3], 0.2, &mut r).unwrap();
    for l in 0..2 {
        assert_eq!(out.eta[l], Complex64::new(0.0, 0.0));
        assert_eq!(out.n_adc[l], Complex64::new(0.0, 0.0));
        assert!((out.y_adc[l] - (y[l] + out.z[l])).norm() < 1e-15);
    }
    let silent = distort_ap_receive(&[Complex64::new(0.0, 0.0); 2], 0.3, &[0.6, 0.9], &[0.0, 0.0], 0.0, &mut r).unwrap();
    assert!(silent.y_adc.iter().all(|x| x.norm() == 0.0));
    assert!(distort_ap_receive(&y, 0.1, &[1.0], &[1.0, 1.0], 0.1, &mut r).is_err());
    assert!(distort_ap_receive(&y, 0.1, &[1.0, 1.0], &[1.0, -1.0], 0.1, &mut r).is_err());
}

#[test]
fn adc_noise_covariance_and_bussgang_consistency() {
    let mut r = rng(4);
    let a = [0.6366, 0.9, 0.99];
    let w = [2.0, 0.5, 1.0];
    let (kappa, sigma2) = (0.2, 0.3);
    let y = vec![Complex64::new(0.7, -0.2), Complex64::new(0.1, 0.4), Complex64::new(-1.0, 0.0)];
    let trials = 100_000;
    let mut var = [0.0; 3];
    let mut mean = [Complex64::new(0.0, 0.0); 3];
    let mut corr = [Complex64::new(0.0, 0.0); 3];
    for _ in 0..trials {
        let out = distort_ap_receive(&y, kappa, &a, &w, sigma2, &mut r).unwrap();
        for l in 0..3 {
            var[l] += out.n_adc[l].norm_sqr() / trials as f64;
            mean[l] += out.y_adc[l] / trials as f64;
            corr[l] += out.n_adc[l] * (y[l] + out.eta[l] + out.z[l]).conj() / trials as f64;
        }
    }
    for l in 0..3 {
        let b = a[l] * (1.0 - a[l]);
        let want = b * ((1.0 + kappa * kappa) * w[l] + sigma2);
        assert!(rel(var[l], want) < 0.02, "antenna {l}");
        let sd_mean = ((a[l] * a[l]) * (kappa * kappa * w[l] + sigma2) + want).sqrt() / (trials as f64).sqrt();
        assert!((mean[l] - y[l] * a[l]).norm() < 5.0 * sd_mean);
        let rf = y[l].norm_sqr() + kappa * kappa * w[l] + sigma2;
        assert!(corr[l].norm() < 5.0 * (want * rf).sqrt() / (trials as f64).sqrt());
    }
}

#[test]
fn resolution_serde_round_trip() {
    let v: Vec<Resolution> = serde_json::from_str(r#"[1, "ideal", 6]"#).unwrap();
    assert_eq!(v, vec![Resolution::Bits(1), Resolution::Ideal, Resolution::Bits(6)]);
    assert_eq!(serde_json::to_string(&v).unwrap(), r#"[1,"ideal",6]"#);
    assert!(serde_json::from_str::<Resolution>("0").is_err());
    assert!(serde_json::from_str::<Resolution>(r#""perfect""#).is_err());
}
