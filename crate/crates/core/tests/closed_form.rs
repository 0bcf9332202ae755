mod common;

use cfmimo::closed_form_se::*;
use cfmimo::hardware::Resolution;
use cfmimo::linalg::{c, cn, diag_from, diag_re, hermitian_eigenvalues, max_asymmetry, scale_cols, scale_rows, trace, CMat, CVec};
use cfmimo::scenario::{LinkStatistics, SystemConfig};
use cfmimo::temporal::AgingProfile;
use cfmimo::{Complex64, Error};
use common::{diag_moment_mc, geometric_aging, impaired, impaired_unit, model_with_pilots, quartic_mc, random_diag, random_link, random_matrix, rayleigh_scenario, rel, rng, unit_scenario};
use rand::Rng;

#[test]
fn diagonal_moment_matches_brute_force() {
    let mut r = rng(1);
    let link = random_link(3, 1.0, &mut r);
    let a = random_diag(3, &mut r);
    let p = random_matrix(3, &mut r);
    let (ra, rb) = (0.8, 0.6);
    let mc = diag_moment_mc(&link, &a, &p, ra, rb, 1_000_000, 2);
    let cf = lemma1_diag_moment(&link.r_bar, &link.h_bar, &link.r, &a, &p, ra, rb).unwrap();
    assert!(rel(cf, mc) < 0.01, "closed form {cf}, simulated {mc}");

    // Coefficient pattern `(ρ_a²ρ̄_b² + 1)` on the first term and `ρ_a²` on the
    // second: visibly off whenever both instants have aged.
    let ap = scale_rows(&a, &p);
    let phar = p.adjoint() * scale_rows(&a, &link.r);
    let d_phar = CMat::from_diagonal(&phar.diagonal());
    let first = trace(&(&link.r_bar * scale_cols(&ap, &diag_re(&link.r_bar)) * ap.adjoint())).re;
    let rest = 2.0 * trace(&(&link.h_bar * link.h_bar.adjoint() * &ap * &d_phar)).re + trace(&(&link.r * &ap * &d_phar)).re;
    let eps = ra * ra * (1.0 - rb * rb) + 1.0;
    let alt = eps * first + ra * ra * rest;
    assert!(rel(alt, mc) > 0.05, "alternative coefficients {alt} vs simulated {mc}");
}

#[test]
fn quartic_moment_matches_brute_force() {
    let mut r = rng(3);
    let link = random_link(3, 1.0, &mut r);
    let a = random_diag(3, &mut r);
    let p = random_matrix(3, &mut r);
    let mc = quartic_mc(&link, &a, &p, 1_000_000, 4);
    let cf = lemma1_quartic_moment(&link.r_bar, &link.h_bar, &link.r, &a, &p).unwrap();
    assert!(rel(cf, mc) < 0.01, "closed form {cf}, simulated {mc}");
}

#[test]
fn moment_special_cases() {
    let mut r = rng(5);
    let full = random_link(3, 1.0, &mut r);
    let a = random_diag(3, &mut r);
    let p = random_matrix(3, &mut r);
    let pha = p.adjoint() * diag_from(&a);
    let ap = diag_from(&a) * &p;

    let rayleigh = LinkStatistics::from_matrices(CVec::zeros(3), full.r.clone());
    let got = lemma1_diag_moment(&rayleigh.r_bar, &rayleigh.h_bar, &rayleigh.r, &a, &p, 0.0, 0.7).unwrap();
    let want = trace(&(&full.r * &ap * CMat::from_diagonal(&full.r.diagonal()) * &pha)).re;
    assert!(rel(got, want) < 1e-12);
    let q = lemma1_quartic_moment(&rayleigh.r_bar, &rayleigh.h_bar, &rayleigh.r, &a, &p).unwrap();
    let want = trace(&(&full.r * &ap * &full.r * &pha)).re + trace(&(&full.r * &ap)).norm_sqr();
    assert!(rel(q, want) < 1e-12);

    let los = LinkStatistics::from_matrices(full.h_bar.clone(), CMat::zeros(3, 3));
    let q = lemma1_quartic_moment(&los.r_bar, &los.h_bar, &los.r, &a, &p).unwrap();
    let hh = &full.h_bar * full.h_bar.adjoint();
    let want = trace(&(&hh * &ap * &hh * &pha)).re;
    assert!(rel(q, want) < 1e-12);
    assert!(rel(q, full.h_bar.dotc(&(&ap * &full.h_bar)).norm_sqr()) < 1e-12);

    assert!(lemma1_quartic_moment(&full.r_bar, &full.h_bar, &full.r, &a[..2], &p).is_err());
    assert!(lemma1_diag_moment(&full.r_bar, &full.h_bar, &full.r, &a, &CMat::zeros(2, 2), 1.0, 1.0).is_err());
}

#[test]
fn diagonal_moment_scalar_algebra() {
    // One antenna: E{|h_t|²|h_n|²} = (L + r)² + (ρ_a ρ_b)²(2Lr + r²).
    let (l, rr): (f64, f64) = (0.7, 0.4);
    let link = LinkStatistics::from_matrices(CVec::from_element(1, Complex64::from_polar(l.sqrt(), 0.3)), CMat::from_element(1, 1, c(rr)));
    let (a, p) = (0.8, Complex64::new(0.5, -1.2));
    for &(ra, rb) in &[(1.0, 1.0), (0.9, 0.3), (0.0, 0.5)] {
        let got = lemma1_diag_moment(&link.r_bar, &link.h_bar, &link.r, &[a], &CMat::from_element(1, 1, p), ra, rb).unwrap();
        let rho2 = (ra * rb) * (ra * rb);
        let want = a * a * p.norm_sqr() * ((l + rr).powi(2) + rho2 * (2.0 * l * rr + rr * rr));
        assert!(rel(got, want) < 1e-13, "({ra}, {rb})");
    }
}

#[test]
fn general_engine_reduces_to_the_rayleigh_formula() {
    let (m, k, n, tau_c, tau_p) = (4, 5, 3, 14, 2);
    let pilot = [0.5, 1.0, 2.0, 0.8, 1.3];
    let (s, beta) = rayleigh_scenario(m, k, n, tau_c, tau_p, &pilot, geometric_aging(&[0.97, 0.9, 0.95, 0.85, 0.99], tau_c), 6);
    let model = model_with_pilots(s);
    let scn = &model.scenario;
    let mut r = rng(7);
    let power: Vec<f64> = (0..k).map(|_| r.random_range(0.1..2.0)).collect();
    let mut worst: f64 = 0.0;
    for nn in scn.data_instants() {
        let lag = (nn - scn.lambda()) as isize;
        let rho_anchor: Vec<f64> = (0..k).map(|i| scn.aging.rho(i, scn.pilot_lag(i))).collect();
        let rho_age: Vec<f64> = (0..k).map(|i| scn.aging.rho(i, lag)).collect();
        let inp = RayleighIdealInput {
            beta: &beta,
            pilot_power: &pilot,
            power: &power,
            rho_anchor: &rho_anchor,
            rho_age: &rho_age,
            pilots: &scn.pilots,
            n_antennas: n,
            sigma2: 1.0,
        };
        for kk in 0..k {
            let t = model.terms(kk, nn).unwrap();
            let probes = [CVec::from_element(m, c(1.0)), t.optimal_lsfd(&power).unwrap(), CVec::from_fn(m, |_, _| cn(&mut r, 1.0))];
            for a in &probes {
                let engine = t.assemble_sinr(a, &power).unwrap().sinr;
                let formula = rayleigh_ideal_sinr(&inp, a.as_slice(), kk);
                worst = worst.max(rel(engine, formula));
            }
        }
    }
    assert!(worst < 1e-10, "largest relative gap {worst}");
}

#[test]
fn single_antenna_static_reduction() {
    let (m, k) = (5, 4);
    let pilot = [1.0; 4];
    let (s, beta) = rayleigh_scenario(m, k, 1, 10, 2, &pilot, AgingProfile::static_channel(k, 10), 8);
    let model = model_with_pilots(s);
    let power = [0.4, 1.0, 1.7, 0.9];
    let ones = vec![c(1.0 / m as f64); m];
    let lambda = model.scenario.lambda();
    for kk in 0..k {
        let inp = RayleighIdealInput {
            beta: &beta,
            pilot_power: &pilot,
            power: &power,
            rho_anchor: &[1.0; 4],
            rho_age: &[1.0; 4],
            pilots: &model.scenario.pilots,
            n_antennas: 1,
            sigma2: 1.0,
        };
        let general = rayleigh_ideal_sinr(&inp, &ones, kk);
        let classic = single_antenna_sinr(&beta, 1.0, &power, &model.scenario.pilots, 1.0, kk);
        let engine = model.terms(kk, lambda).unwrap().assemble_sinr(&CVec::from_column_slice(&ones), &power).unwrap().sinr;
        assert!(rel(general, classic) < 1e-10);
        assert!(rel(engine, classic) < 1e-10);
    }
}

#[test]
fn interference_free_scalar_substitution() {
    let (m, n) = (3, 2);
    let (s, beta) = rayleigh_scenario(m, 1, n, 8, 1, &[1.5], geometric_aging(&[0.9], 8), 9);
    let model = model_with_pilots(s);
    let (p, pt, nf) = (0.7, 1.5, n as f64);
    let lag_anchor = model.scenario.pilot_lag(0);
    let rho_a = model.scenario.aging.rho(0, lag_anchor);
    for nn in model.scenario.data_instants() {
        let rho = model.scenario.aging.rho(0, (nn - model.scenario.lambda()) as isize);
        let gamma: Vec<f64> = (0..m).map(|mm| pt * rho_a * rho_a * beta[mm][0].powi(2) / (pt * beta[mm][0] + 1.0)).collect();
        let sg: f64 = gamma.iter().map(|g| nf * g).sum();
        let sgb: f64 = (0..m).map(|mm| nf * gamma[mm] * beta[mm][0]).sum();
        let want = p * rho * rho * sg * sg / (p * sgb + sg);
        let got = model.terms(0, nn).unwrap().assemble_sinr(&CVec::from_element(m, c(1.0)), &[p]).unwrap().sinr;
        assert!(rel(got, want) < 1e-10, "instant {nn}: {got} vs {want}");
    }
}

#[test]
fn uncorrelated_ue_kernels_at_the_anchor() {
    let s = impaired_unit(3, 4, 2, 10, 2, 10);
    let model = SeModel::new(s).unwrap();
    let scn = &model.scenario;
    for k in 0..4 {
        let t = model.terms(k, scn.lambda()).unwrap();
        for i in 0..4 {
            if scn.pilots.shares_pilot(k, i) {
                continue;
            }
            for m in 0..3 {
                let a = &scn.hardware.a[m];
                let gam = &model.kernels.get(m, k).gamma_bar;
                let want = trace(&(gam * scale_cols(&scale_rows(a, &scn.link(m, i).r_bar), a))).re;
                assert!(rel(t.c[i][(m, m)].re, want) < 1e-12);
                for m2 in 0..3 {
                    if m2 != m {
                        assert_eq!(t.c[i][(m, m2)], c(0.0));
                    }
                }
            }
        }
    }
}

#[test]
fn term_matrices_are_hermitian_and_nonnegative() {
    let s = impaired_unit(3, 4, 2, 10, 2, 11);
    let model = SeModel::new(s).unwrap();
    let mut r = rng(12);
    for nn in model.scenario.data_instants() {
        for t in model.terms_at(nn).unwrap() {
            for v in t.ca.iter().chain(&t.adc_const).chain(&t.q) {
                assert!(*v >= 0.0);
            }
            for i in 0..4 {
                assert!(t.d[i].iter().chain(&t.dbar[i]).all(|&v| v >= 0.0));
                assert!(max_asymmetry(&t.c[i]) <= 1e-12 * t.c[i].norm());
                let min = hermitian_eigenvalues(&t.c[i]).into_iter().fold(f64::MAX, f64::min);
                assert!(min >= -1e-10 * t.c[i].norm(), "C_ki eigenvalue {min}");
            }
            assert!(max_asymmetry(&t.bu) <= 1e-12 * t.bu.norm().max(1e-300));
            for _ in 0..20 {
                let a = CVec::from_fn(3, |_, _| cn(&mut r, 1.0));
                let tp = t.term_powers(&a, &[1.0, 0.5, 2.0, 1.0]);
                for v in [tp.bu, tp.ca, tp.dac, tp.trf, tp.rrf, tp.adc, tp.ns].iter().chain(&tp.iui) {
                    assert!(*v >= -1e-12 * tp.denominator(), "negative term {v}");
                }
                let parts = t.assemble_sinr(&a, &[1.0, 0.5, 2.0, 1.0]).unwrap();
                assert!(rel(parts.omega, tp.denominator()) < 1e-10);
                assert!(rel(parts.delta, tp.ds) < 1e-12);
            }
        }
    }
}

#[test]
fn ideal_hardware_removes_distortion_terms() {
    let s = unit_scenario(SystemConfig::reference(3, 3, 2, 8, 2), 13).with_aging(geometric_aging(&[0.95, 0.9, 0.8], 8));
    let model = SeModel::new(s).unwrap();
    let t = model.terms(1, 5).unwrap();
    assert!(t.adc_const.iter().all(|&v| v == 0.0));
    for i in 0..3 {
        assert!(t.d[i].iter().chain(&t.dbar[i]).all(|&v| v == 0.0));
    }
    assert!((0..3).all(|m| (0..3).all(|m2| m == m2 || t.bu[(m, m2)] == c(0.0))));
    let tp = t.term_powers(&CVec::from_element(3, c(1.0)), &[1.0; 3]);
    assert_eq!((tp.dac, tp.trf, tp.rrf, tp.adc), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn omega_is_affine_in_the_powers() {
    let s = impaired_unit(3, 4, 2, 10, 2, 14);
    let model = SeModel::new(s).unwrap();
    let t = model.terms(2, 7).unwrap();
    let mut r = rng(15);
    let a = CVec::from_fn(3, |_, _| cn(&mut r, 1.0));
    let zero = [0.0; 4];
    let base = t.assemble_sinr(&a, &zero).unwrap();
    assert_eq!(base.delta, 0.0);
    assert_eq!(base.sinr, 0.0);
    let slopes: Vec<f64> = (0..4)
        .map(|i| {
            let mut e = zero;
            e[i] = 1.0;
            t.assemble_sinr(&a, &e).unwrap().omega - base.omega
        })
        .collect();
    assert!(slopes.iter().all(|&s| s >= 0.0));
    let mut e = zero;
    e[2] = 1.0;
    let d1 = t.assemble_sinr(&a, &e).unwrap().delta;
    for _ in 0..10 {
        let p: Vec<f64> = (0..4).map(|_| r.random_range(0.0..3.0)).collect();
        let parts = t.assemble_sinr(&a, &p).unwrap();
        let affine = base.omega + slopes.iter().zip(&p).map(|(s, x)| s * x).sum::<f64>();
        assert!(rel(parts.omega, affine) < 1e-10);
        assert!(rel(parts.delta, d1 * p[2]) < 1e-12);
    }
}

#[test]
fn optimal_weights_dominate_on_random_networks() {
    for seed in 0..100 {
        let mut cfg = impaired(SystemConfig::reference(4, 3, 2, 12, 2), 0.05, &[Resolution::Bits(2), Resolution::Bits(5)]);
        cfg.seed = seed;
        cfg.velocities = vec![20.0, 40.0, 58.9];
        cfg.sample_time = 2e-4;
        let model = SeModel::new(common::scenario(cfg)).unwrap();
        let p = model.scenario.config.data_power.clone();
        let mut r = rng(1000 + seed);
        for nn in model.scenario.data_instants() {
            for t in model.terms_at(nn).unwrap() {
                let opt = t.optimal_lsfd(&p).unwrap();
                let best = t.assemble_sinr(&opt, &p).unwrap().sinr;
                let om = t.omega_matrix(&p);
                let q = t.delta.dotc(&cfmimo::linalg::hermitian_solve(&om, &t.delta).unwrap()).re;
                let ak = t.alpha_d[t.k];
                assert!(rel(best, ak * ak * p[t.k] * q) < 1e-10);
                let ones = t.assemble_sinr(&CVec::from_element(4, c(1.0)), &p).unwrap().sinr;
                assert!(best >= ones * (1.0 - 1e-10), "seed {seed}: {best} < {ones}");
                if seed < 10 {
                    for _ in 0..100 {
                        let a = common::random_unit_vector(4, &mut r);
                        let s = t.assemble_sinr(&a, &p).unwrap().sinr;
                        assert!(best >= s * (1.0 - 1e-10));
                    }
                }
            }
        }
    }
}

#[test]
fn single_ap_weights_do_not_matter() {
    let s = impaired_unit(1, 3, 3, 8, 2, 16);
    let model = SeModel::new(s).unwrap();
    let t = model.terms(0, 4).unwrap();
    let p = [1.0, 0.3, 2.0];
    let base = t.assemble_sinr(&CVec::from_element(1, c(1.0)), &p).unwrap().sinr;
    for w in [Complex64::new(3.0, -2.0), Complex64::new(-1e-3, 0.0), Complex64::new(0.0, 7.0)] {
        let s = t.assemble_sinr(&CVec::from_element(1, w), &p).unwrap().sinr;
        assert!(rel(s, base) < 1e-12);
    }
    assert!(matches!(t.assemble_sinr(&CVec::zeros(1), &p), Err(Error::Domain(_))));
}

#[test]
fn aging_structure_of_the_terms() {
    let s = impaired_unit(3, 4, 2, 20, 2, 17);
    let model = SeModel::new(s).unwrap();
    let scn = &model.scenario;
    let p = [1.0, 0.8, 1.2, 0.5];
    let ones = CVec::from_element(3, c(1.0));
    for k in 0..4 {
        let mut ratios = Vec::new();
        let mut samples: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 4];
        for nn in scn.data_instants() {
            let lag = (nn - scn.lambda()) as isize;
            let tp = model.terms(k, nn).unwrap().term_powers(&ones, &p);
            ratios.push(tp.ds / scn.aging.rho(k, lag).powi(2));
            for i in 0..4 {
                samples[i].push((scn.aging.rho(i, lag).powi(2), tp.iui[i]));
            }
        }
        for r in &ratios {
            assert!(rel(*r, ratios[0]) < 1e-10);
        }
        for i in 0..4 {
            if i == k {
                continue;
            }
            let fit = iui_aging_coefficients(&samples[i]).unwrap();
            assert!(fit.max_rel_residual <= 1e-9, "pair ({k},{i}) residual {}", fit.max_rel_residual);
            if scn.pilots.shares_pilot(k, i) {
                assert!(fit.e4 > 0.0, "co-pilot interference grows with correlation");
            }
        }
    }
}

#[test]
fn static_ue_gives_constant_interference() {
    let fit = iui_aging_coefficients(&[(1.0, 0.25); 6]).unwrap();
    assert_eq!(fit.e4, 0.0);
    assert_eq!(fit.e2, 0.25);
    assert_eq!(fit.max_rel_residual, 0.0);
    assert!(iui_aging_coefficients(&[]).is_err());
}

/// Closed-form LSFD SINR of every `(k, n)` for the given impairments.
fn sinr_grid(kappa_t: f64, kappa_r: f64, adc: Resolution, dac: Resolution) -> Vec<Vec<f64>> {
    let mut cfg = SystemConfig::reference(3, 4, 2, 10, 2);
    cfg.kappa_t = vec![kappa_t; 4];
    cfg.kappa_r = vec![kappa_r; 3];
    cfg.adc_bits = vec![adc; 6];
    cfg.dac_bits = vec![dac; 4];
    let s = unit_scenario(cfg, 18).with_aging(geometric_aging(&[0.97, 0.9, 0.95, 0.85], 10));
    let model = SeModel::new(s).unwrap();
    model.evaluate(&[1.0, 0.7, 1.3, 1.0], WeightMode::Lsfd).unwrap().sinr
}

fn assert_nonincreasing(grids: &[Vec<Vec<f64>>], what: &str) {
    for w in grids.windows(2) {
        for (a, b) in w[0].iter().flatten().zip(w[1].iter().flatten()) {
            assert!(*b <= a * (1.0 + 1e-12), "{what}: {b} > {a}");
        }
    }
}

#[test]
fn impairments_never_help() {
    use Resolution::*;
    let levels = [0.0, 0.05, 0.15];
    let g: Vec<_> = levels.iter().map(|&k| sinr_grid(k, 0.05, Bits(4), Bits(4))).collect();
    assert_nonincreasing(&g, "transmit EVM");
    let g: Vec<_> = levels.iter().map(|&k| sinr_grid(0.05, k, Bits(4), Bits(4))).collect();
    assert_nonincreasing(&g, "receive EVM");
    let g: Vec<_> = [Ideal, Bits(4), Bits(1)].iter().map(|&b| sinr_grid(0.05, 0.05, b, Bits(4))).collect();
    assert_nonincreasing(&g, "ADC resolution");
    let g: Vec<_> = [Ideal, Bits(4), Bits(1)].iter().map(|&b| sinr_grid(0.05, 0.05, Bits(4), b)).collect();
    assert_nonincreasing(&g, "DAC resolution");
}

#[test]
fn instants_outside_the_data_phase_are_rejected() {
    let model = SeModel::new(impaired_unit(2, 2, 2, 8, 2, 19)).unwrap();
    assert!(matches!(model.terms(0, 2), Err(Error::Domain(_))));
    assert!(model.terms(0, 9).is_err());
    assert!(model.terms(0, 3).is_ok() && model.terms(1, 8).is_ok());
    assert!(model.evaluate(&[1.0], WeightMode::Sld).is_err());
}

#[test]
fn sum_se_examples() {
    let (per, total) = sum_se(10, &[vec![0.0; 5], vec![0.0; 5]]);
    assert_eq!(total, 0.0);
    assert_eq!(per, vec![0.0, 0.0]);
    let (per, total) = sum_se(10, &[vec![1.0]]);
    assert!((per[0] - 0.1).abs() < 1e-15 && (total - 0.1).abs() < 1e-15);

    let model = SeModel::new(impaired_unit(2, 3, 2, 9, 2, 20)).unwrap();
    let rep = model.evaluate(&[0.0, 1.0, 1.0], WeightMode::Lsfd).unwrap();
    assert!(rep.sinr[0].iter().all(|&s| s == 0.0));
    assert_eq!(rep.per_ue[0], 0.0);
    assert_eq!(rep.sinr[1].len(), 7);
    let sld = model.evaluate(&[0.0, 1.0, 1.0], WeightMode::Sld).unwrap();
    assert!(rep.sum >= sld.sum);
}
