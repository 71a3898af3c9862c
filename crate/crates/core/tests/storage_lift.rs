//! Work-value distribution and entropy-energy ratio checks.

use fbe_core::num::NeumaierSum;
use fbe_core::protocol::{apply_protocol, g2_swap, Mode, ProtocolConfig};
use fbe_core::spectrum::{build_sorted_spectrum, expand_dense};
use fbe_core::storage::{lift_report, work_distribution};
use fbe_core::{BathSpec, Precision, SiteSpectrum};

fn fig_baths(n: u32) -> (BathSpec, BathSpec) {
    let s = SiteSpectrum::qubit_pm1();
    (
        BathSpec::new(s.clone(), 1.0 / 30.0, n).unwrap(),
        BathSpec::new(s, 1.0 / 15.0, n).unwrap(),
    )
}

#[test]
fn point_mass_at_zero_for_identity() {
    let (hot, cold) = fig_baths(10);
    let cfg = ProtocolConfig::new(hot, cold, 0, Mode::Exact).unwrap();
    let wd = work_distribution(&cfg).unwrap();
    assert_eq!(wd.support, vec![0.0]);
    assert_eq!(wd.entropy, 0.0);
}

#[test]
fn mean_work_value_matches_extracted_work() {
    let (hot, cold) = fig_baths(12);
    let cfg = ProtocolConfig::new(hot, cold, 2, Mode::Exact).unwrap();
    let out = apply_protocol(&cfg).unwrap();
    let wd = work_distribution(&cfg).unwrap();
    assert!(
        (wd.mean - out.work).abs() <= 1e-10 * (1.0 + out.work.abs()),
        "mean {} vs W {}",
        wd.mean,
        out.work
    );
    assert!((wd.total_mass + wd.residual - 1.0).abs() < 1e-12);
    // per-trajectory conservation on a sampled sub-grid: the work value
    // equals the energy lost by the baths, exactly in integer units
    let x = build_sorted_spectrum(&cfg.hot).unwrap();
    let y = build_sorted_spectrum(&cfg.cold).unwrap();
    let dn = 1u64 << 12;
    let lpx = expand_dense(&x, dn as usize).unwrap();
    let lpy = expand_dense(&y, dn as usize).unwrap();
    let lzx = x.log_z.to_f64();
    let lzy = y.log_z.to_f64();
    let h = |lp: f64, lz: f64, beta: f64| -(lp + 12.0 * lz) / beta;
    for (i, j) in [(0u64, 0u64), (17, 1023), (4095, 2), (900, 900)] {
        let (ip, jp) = g2_swap(i as u128, j as u128, 2, 12, 2).unwrap();
        let w = h(lpx[i as usize], lzx, cfg.hot.beta) + h(lpy[j as usize], lzy, cfg.cold.beta)
            - h(lpx[ip as usize], lzx, cfg.hot.beta)
            - h(lpy[jp as usize], lzy, cfg.cold.beta);
        // every work value must land on the distribution's support
        assert!(
            wd.support.iter().any(|s| (s - w).abs() < 1e-8),
            "trajectory work {w} not in support"
        );
    }
}

#[test]
fn identical_baths_mean_nonpositive() {
    let s = SiteSpectrum::qubit_pm1();
    let hot = BathSpec::new(s.clone(), 0.3, 10).unwrap();
    let cold = BathSpec::new(s, 0.3, 10).unwrap();
    let cfg = ProtocolConfig::new(hot, cold, 2, Mode::Exact).unwrap();
    let wd = work_distribution(&cfg).unwrap();
    assert!(wd.mean <= 1e-12);
}

#[test]
fn blockwise_distribution_approximates_exact() {
    // a well-concentrated point: cold bath firmly ordered, so the
    // dominant-region construction captures nearly all mass
    let s = SiteSpectrum::qubit_pm1();
    let hot = BathSpec::new(s.clone(), 0.4, 16).unwrap();
    let cold = BathSpec::new(s, 1.2, 16).unwrap();
    let mut cfg = ProtocolConfig::new(hot, cold, 2, Mode::Exact).unwrap();
    cfg.precision = Some(Precision::Double);
    let exact = work_distribution(&cfg).unwrap();
    cfg.mode = Mode::Blockwise;
    let approx = work_distribution(&cfg).unwrap();
    assert!(approx.total_mass > 0.9, "mass {}", approx.total_mass);
    // the dominant-region construction must agree up to the reported
    // residual on the mean scale (residual mass can carry O(n) energy)
    let tol = 2.0 * 16.0 * (approx.residual + 1e-12) + 1e-9;
    assert!(
        (exact.mean - approx.mean).abs() <= tol,
        "mean {} vs {} (residual {})",
        exact.mean,
        approx.mean,
        approx.residual
    );
}

#[test]
fn lift_ratios_and_caps() {
    // a working-engine point: strong couplings, W > 0
    let s = SiteSpectrum::qubit_pm1();
    let hot = BathSpec::new(s.clone(), 0.2, 14).unwrap();
    let cold = BathSpec::new(s, 0.9, 14).unwrap();
    let cfg = ProtocolConfig::new(hot, cold, 2, Mode::Exact).unwrap();
    let out = apply_protocol(&cfg).unwrap();
    assert!(out.work > 0.0, "engine must run here, W = {}", out.work);
    let wd = work_distribution(&cfg).unwrap();
    let lift = lift_report(&out, &wd).unwrap();
    assert!(lift.conservation_ok, "gap {}", lift.conservation_gap);
    assert!(lift.unital_ok);
    assert!(lift.cap_ok, "S_storage {} cap {}", lift.s_storage, lift.cap);
    // hot bath loses entropy, cold gains: both ratios positive here
    assert!(lift.a_hot > 0.0);
    assert!(lift.a_cold > 0.0);
    // hot bath gives up no more entropy per unit energy than the cold
    // bath absorbs (the ordered-energy claim, empirical)
    assert!(
        lift.a_hot <= lift.a_cold + 1e-12,
        "a_hot {} > a_cold {}",
        lift.a_hot,
        lift.a_cold
    );
}

#[test]
fn zero_heat_ratios_rejected() {
    let (hot, cold) = fig_baths(8);
    let cfg = ProtocolConfig::new(hot, cold, 0, Mode::Exact).unwrap();
    let out = apply_protocol(&cfg).unwrap();
    let wd = work_distribution(&cfg).unwrap();
    assert!(lift_report(&out, &wd).is_err());
}

#[test]
fn entropy_deltas_near_swap_size_at_moderate_n() {
    // at n = 400 the hot bath loses ~m log d of entropy and the cold
    // bath gains it, up to the product-approximation residual
    let (hot, cold) = fig_baths(400);
    let q = 0.3 * 400f64.powf(2.0 / 3.0);
    let mh = fbe_core::moments(&hot.site, hot.beta).unwrap();
    let m = fbe_core::block_size_m(hot.beta, q, 400, mh.variance, 2).unwrap() as u32;
    let cfg = ProtocolConfig::new(hot, cold, m, Mode::Blockwise).unwrap();
    let out = apply_protocol(&cfg).unwrap();
    let m_ln_d = m as f64 * 2.0f64.ln();
    // propagated bound: Fannes-type in the residual plus the reported
    // comb-entropy error
    let eps = out.l1_residual.min(2.0);
    let t = eps / 2.0;
    let h2 = if t > 0.0 && t < 1.0 {
        -t * t.ln() - (1.0 - t) * (1.0 - t).ln()
    } else {
        0.0
    };
    let bound = t * (2.0 * 400.0 * 2.0f64.ln()) + h2 + 1e-9;
    assert!(
        (out.delta_s_hot + m_ln_d).abs() <= bound,
        "|dS_hot + m ln d| = {} > {bound}",
        (out.delta_s_hot + m_ln_d).abs()
    );
    assert!(
        (out.delta_s_cold - m_ln_d).abs() <= bound,
        "|dS_cold - m ln d| = {} > {bound}",
        (out.delta_s_cold - m_ln_d).abs()
    );
}

#[test]
fn storage_entropy_cap_scales_with_support() {
    // support of the work distribution is polynomial in n, so its entropy
    // sits far below the 4(d-1) ln(n+1) cap even at larger n
    for n in [1000u32, 4000] {
        let (hot, cold) = fig_baths(n);
        let q = 0.3 * (n as f64).powf(2.0 / 3.0);
        let mh = fbe_core::moments(&hot.site, hot.beta).unwrap();
        let m = fbe_core::block_size_m(hot.beta, q, n, mh.variance, 2).unwrap() as u32;
        let cfg = ProtocolConfig::new(hot, cold, m, Mode::Blockwise).unwrap();
        let out = apply_protocol(&cfg).unwrap();
        let wd = work_distribution(&cfg).unwrap();
        let lift = lift_report(&out, &wd).unwrap();
        assert!(lift.cap_ok, "n={n}: S={} cap={}", lift.s_storage, lift.cap);
    }
}
