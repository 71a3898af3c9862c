//! Property tests for the structural invariants.

use fbe_core::num::{Dd, NeumaierSum};
use fbe_core::protocol::g2_swap;
use fbe_core::spectrum::build_sorted_spectrum;
use fbe_core::{gibbs_site_probs, moments, BathSpec, SiteSpectrum};
use num_bigint::BigUint;
use num_traits::Zero;
use proptest::prelude::*;

fn arb_levels() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 2..5).prop_filter("distinct levels", |v| {
        v.iter().any(|&x| (x - v[0]).abs() > 1e-3)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn multiplicities_sum_to_total(levels in arb_levels(), beta in 0.05f64..2.0, n in 1u32..24) {
        let bath = BathSpec::new(SiteSpectrum::new(levels).unwrap(), beta, n).unwrap();
        let spec = build_sorted_spectrum(&bath).unwrap();
        let mut cur = spec.cursor();
        let mut sum = BigUint::zero();
        let mut mass = NeumaierSum::new();
        let mut last_lp = f64::INFINITY;
        loop {
            sum += cur.count();
            let lp = cur.log_prob().to_f64();
            prop_assert!(lp < last_lp, "log-probs must strictly decrease");
            last_lp = lp;
            mass.add(fbe_core::num::ln_biguint_dd(cur.count()).to_f64().exp() * lp.exp());
            if cur.at_last() { break; }
            cur.advance();
        }
        prop_assert_eq!(&sum, spec.total_states());
        prop_assert!((mass.total() - 1.0).abs() < 1e-11, "mass {}", mass.total());
    }

    #[test]
    fn site_probs_normalize(levels in arb_levels(), beta in 0.0f64..3.0) {
        let site = SiteSpectrum::new(levels).unwrap();
        let p = gibbs_site_probs(&site, beta).unwrap();
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-14);
        prop_assert!(p.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn moment_psi_identities(levels in arb_levels(), beta in 0.05f64..2.0) {
        let site = SiteSpectrum::new(levels).unwrap();
        let m = moments(&site, beta).unwrap();
        prop_assert!(m.variance > 0.0);
        prop_assert!(m.psi_prime > 0.0);
        prop_assert!((m.psi_prime * beta * beta * m.variance - 1.0).abs() < 1e-12);
        let s = m.variance.sqrt();
        let expect = m.skewness / (beta.powi(3) * s.powi(3));
        prop_assert!((m.psi_double_prime - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
    }

    #[test]
    fn digit_swap_inverts(n in 2u32..20, d in 2u32..4, m_seed in 0u32..20, a in 0u64..u64::MAX, b in 0u64..u64::MAX) {
        let m = m_seed % n;
        let dn = (d as u128).pow(n);
        let dm = (d as u128).pow(m);
        let lw = dn / dm;
        let i = a as u128 % dn;
        let j = b as u128 % dn;
        let (ip, jp) = g2_swap(i, j, m, n, d).unwrap();
        prop_assert!(ip < dn && jp < dn);
        // explicit inverse: recover the four digit components
        let i_back = (ip % lw) * dm + (jp % dm);
        let j_back = (ip / lw) * lw + (jp / dm);
        prop_assert_eq!(i_back, i);
        prop_assert_eq!(j_back, j);
    }

    #[test]
    fn dd_exp_ln_roundtrip(x in -600.0f64..600.0) {
        let v = Dd::from_f64(x).exp();
        if v.to_f64() > 0.0 && v.is_finite() {
            let back = v.ln().to_f64();
            prop_assert!((back - x).abs() < 1e-25 * (1.0 + x.abs()) + 1e-28);
        }
    }

    #[test]
    fn dd_arithmetic_associates_tightly(a in -1e10f64..1e10, b in -1e10f64..1e10, c in -1e10f64..1e10) {
        let (x, y, z) = (Dd::from_f64(a), Dd::from_f64(b), Dd::from_f64(c));
        let left = (x + y) + z;
        let right = x + (y + z);
        let scale = a.abs() + b.abs() + c.abs() + 1.0;
        prop_assert!((left - right).abs().to_f64() <= 1e-25 * scale);
    }
}

#[test]
fn g2_full_bijection_exhaustive() {
    // exhaustive bijectivity for each (d, n, m) small combo
    for (d, n) in [(2u32, 6u32), (3, 4)] {
        let dn = (d as u128).pow(n);
        for m in 0..n {
            let mut seen = vec![false; (dn * dn) as usize];
            for i in 0..dn {
                for j in 0..dn {
                    let (ip, jp) = g2_swap(i, j, m, n, d).unwrap();
                    let k = (ip * dn + jp) as usize;
                    assert!(!seen[k], "d={d} n={n} m={m}: collision");
                    seen[k] = true;
                }
            }
        }
    }
}

#[test]
fn normalization_at_large_n() {
    // compensated block-mass sum stays within 1e-12 of 1 up to n = 1e5
    let bath = BathSpec::new(SiteSpectrum::qubit_pm1(), 1.0 / 15.0, 100_000).unwrap();
    let spec = build_sorted_spectrum(&bath).unwrap();
    let mut cur = spec.cursor();
    let mut mass = NeumaierSum::new();
    loop {
        let term = (fbe_core::num::ln_biguint_dd(cur.count()) + cur.log_prob())
            .exp()
            .to_f64();
        mass.add(term);
        if cur.at_last() {
            break;
        }
        cur.advance();
    }
    assert!(
        (mass.total() - 1.0).abs() < 1e-12,
        "normalization at n = 1e5: {}",
        mass.total()
    );
}
