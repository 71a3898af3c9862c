//! Asymptotic expansion coefficients of the optimal efficiency in powers
//! of q/n, the swap block-size rule, the lattice/non-lattice classifier,
//! and the closed-form estimate of the hot-bath divergence D_X^n.

use crate::bath::MomentSet;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// First- and second-order efficiency coefficients plus the 1/n^2
/// refinement d1. All are positive for valid baths.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExpansionCoeffs {
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
}

/// coefficient of q/n:
/// (1/(2 b_H^2 s_H^2) + 1/(2 b_L^2 s_L^2)) * b_H^2 / b_L
pub fn coeff_c1(hot: &MomentSet, cold: &MomentSet, beta_hot: f64, beta_cold: f64) -> f64 {
    let th = 1.0 / (2.0 * beta_hot * beta_hot * hot.variance);
    let tl = 1.0 / (2.0 * beta_cold * beta_cold * cold.variance);
    (th + tl) * beta_hot * beta_hot / beta_cold
}

/// coefficient of q^2/n^2: the four-term bracket times b_H^3 / b_L.
///
/// Derived from D(beta'||beta) = sigma^2 d^2/2 - mu_3 d^3/3 per site; the
/// skewness terms enter with the hot sign positive (the opposite-sign
/// variant misses the documented d1 reference value by 0.5% and makes the
/// q^3/n^3 residual drift, so this sign is pinned by tests).
pub fn coeff_c2(hot: &MomentSet, cold: &MomentSet, beta_hot: f64, beta_cold: f64) -> f64 {
    let sh = hot.variance.sqrt();
    let sl = cold.variance.sqrt();
    let bracket = hot.skewness / (6.0 * beta_hot.powi(3) * sh.powi(3))
        - cold.skewness / (6.0 * beta_cold.powi(3) * sl.powi(3))
        + 1.0 / (2.0 * beta_cold.powi(4) * cold.variance * cold.variance)
        + 1.0 / (2.0 * beta_hot.powi(2) * beta_cold.powi(2) * hot.variance * cold.variance);
    bracket * beta_hot.powi(3) / beta_cold
}

/// coefficient of q/n^2:
/// [(g_H/(2 b_H s_H) - 1/(b_H^2 s_H^2))^2 + (same for cold)] * b_H^2 / b_L
/// = [(psi''/(2 psi') - psi')^2 summed] * b_H^2 / b_L.
pub fn coeff_d1(hot: &MomentSet, cold: &MomentSet, beta_hot: f64, beta_cold: f64) -> f64 {
    let term = |m: &MomentSet, b: f64| -> f64 {
        let s = m.variance.sqrt();
        let x = m.skewness / (2.0 * b * s) - 1.0 / (b * b * m.variance);
        x * x
    };
    (term(hot, beta_hot) + term(cold, beta_cold)) * beta_hot * beta_hot / beta_cold
}

pub fn coeffs(hot: &MomentSet, cold: &MomentSet, beta_hot: f64, beta_cold: f64) -> ExpansionCoeffs {
    ExpansionCoeffs {
        c1: coeff_c1(hot, cold, beta_hot, beta_cold),
        c2: coeff_c2(hot, cold, beta_hot, beta_cold),
        d1: coeff_d1(hot, cold, beta_hot, beta_cold),
    }
}

impl ExpansionCoeffs {
    /// The expansion is trustworthy while c1*q/n stays small.
    pub fn in_regime(&self, q: f64, n: u32) -> bool {
        self.c1 * q / n as f64 <= 0.1
    }
}

/// Thermodynamic-optimum expansion: Carnot - sum_{k<=order} c_k (q/n)^k.
pub fn eta_thermo_expansion(
    coeffs: &ExpansionCoeffs,
    beta_hot: f64,
    beta_cold: f64,
    q: f64,
    n: u32,
    order: u8,
) -> f64 {
    let x = q / n as f64;
    let mut eta = 1.0 - beta_hot / beta_cold - coeffs.c1 * x;
    if order >= 2 {
        eta -= coeffs.c2 * x * x;
    }
    eta
}

/// Protocol-efficiency expansion. Non-lattice spectra get the refined
/// form with the d1/n^2 term; lattice spectra get order 1 only (the
/// refinement is not established there, so the error band is wider).
pub fn eta_protocol_expansion(
    coeffs: &ExpansionCoeffs,
    beta_hot: f64,
    beta_cold: f64,
    q: f64,
    n: u32,
    lattice: &LatticeClass,
) -> f64 {
    let x = q / n as f64;
    let carnot = 1.0 - beta_hot / beta_cold;
    match lattice.kind {
        LatticeKind::NonLattice => {
            carnot - coeffs.c1 * x - coeffs.c2 * x * x - coeffs.d1 * q / (n as f64 * n as f64)
        }
        LatticeKind::Lattice => carnot - coeffs.c1 * x,
    }
}

/// Swap block size: floor((b_H q + q^2/(2 n sigma_X^2)) / log d), with
/// sigma_X^2 the per-site hot-bath energy variance.
pub fn block_size_m(
    beta_hot: f64,
    q: f64,
    n: u32,
    sigma2_hot_per_site: f64,
    d: u32,
) -> Result<u64> {
    if !(q > 0.0) {
        return Err(Error::invalid("q must be > 0"));
    }
    if !(sigma2_hot_per_site > 0.0) {
        return Err(Error::degenerate("zero hot-bath variance"));
    }
    let log_d = (d as f64).ln();
    let m = ((beta_hot * q + q * q / (2.0 * n as f64 * sigma2_hot_per_site)) / log_d).floor();
    if !(m >= 0.0) {
        return Err(Error::numerical("block size evaluation failed"));
    }
    let m = m as u64;
    if m >= n as u64 {
        return Err(Error::invalid(format!(
            "block size m = {m} >= n = {n}: heat draw too large for this bath"
        )));
    }
    Ok(m)
}

/// The exact (non-integer) block-size argument, used to separate the
/// floor-quantization component of heat targeting.
pub fn block_size_exact(beta_hot: f64, q: f64, n: u32, sigma2: f64, d: u32) -> f64 {
    (beta_hot * q + q * q / (2.0 * n as f64 * sigma2)) / (d as f64).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatticeKind {
    Lattice,
    NonLattice,
}

/// Whether all level differences lie on a common grid t*Z.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LatticeClass {
    pub kind: LatticeKind,
    /// grid span when lattice
    pub span: Option<f64>,
    /// set when the classification was within 10x of the tolerance
    pub near_boundary: bool,
}

impl LatticeClass {
    pub fn non_lattice() -> Self {
        LatticeClass { kind: LatticeKind::NonLattice, span: None, near_boundary: false }
    }
}

/// Best rational p/q with q <= max_den approximating x, by continued
/// fractions. Returns (p, q, |x - p/q|).
fn rational_approx(x: f64, max_den: u64) -> (i64, u64, f64) {
    let mut a = x.floor();
    let (mut p0, mut q0, mut p1, mut q1) = (1i64, 0u64, a as i64, 1u64);
    let mut frac = x - a;
    for _ in 0..64 {
        if frac.abs() < 1e-15 {
            break;
        }
        let r = 1.0 / frac;
        a = r.floor();
        frac = r - a;
        let p2 = a as i64 * p1 + p0;
        let q2 = a as u64 * q1 + q0;
        if q2 > max_den {
            break;
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
    }
    (p1, q1.max(1), (x - p1 as f64 / q1.max(1) as f64).abs())
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Classifies a spectrum as lattice (common span for all pairwise level
/// differences) or non-lattice, at relative tolerance `tol` on the
/// integer-ness of difference ratios after continued-fraction reduction.
///
/// The denominator cap is chosen so that a badly approximable irrational
/// ratio cannot sneak under a 1e-9 tolerance: with q <= 4096 the best
/// rational error is at least ~1/(sqrt(5) q^2) ~ 2.7e-8.
pub fn lattice_classify(site: &crate::bath::SiteSpectrum, tol: f64) -> LatticeClass {
    const MAX_DEN: u64 = 4096;
    let levels = site.levels();
    let mut diffs: Vec<f64> = Vec::new();
    for i in 0..levels.len() {
        for j in (i + 1)..levels.len() {
            let dif = (levels[i] - levels[j]).abs();
            if dif > 0.0 {
                diffs.push(dif);
            }
        }
    }
    debug_assert!(!diffs.is_empty());
    let g = diffs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut near = false;
    let mut fractions: Vec<(i64, u64)> = Vec::new();
    for &dif in &diffs {
        let r = dif / g;
        let (p, q, err) = rational_approx(r, MAX_DEN);
        let rel = err / r.max(1.0);
        if rel > tol {
            return LatticeClass::non_lattice();
        }
        if rel > 0.1 * tol {
            near = true;
        }
        fractions.push((p, q));
    }
    // span = g * gcd(p_i * L / q_i) / L with L = lcm of denominators
    let mut l: u64 = 1;
    for &(_, q) in &fractions {
        l = l / gcd(l, q) * q;
        if l > MAX_DEN * MAX_DEN {
            return LatticeClass::non_lattice();
        }
    }
    let mut g_int: u64 = 0;
    for &(p, q) in &fractions {
        let m = (p.unsigned_abs()) * (l / q);
        g_int = gcd(g_int, m);
    }
    let span = g * g_int as f64 / l as f64;
    // verify every difference sits on the grid within tol
    for &dif in &diffs {
        let r = dif / span;
        if (r - r.round()).abs() > tol * r.max(1.0) {
            return LatticeClass::non_lattice();
        }
    }
    LatticeClass { kind: LatticeKind::Lattice, span: Some(span), near_boundary: near }
}

/// Closed-form estimate of D_X^n(m). The refined cubic and 1/n^2 terms
/// apply to non-lattice spectra; lattice spectra keep the leading term.
#[derive(Clone, Copy, Debug)]
pub struct DxAsymptotic {
    pub value: f64,
    /// false when m log d > n/10, where the estimate degrades
    pub in_regime: bool,
}

pub fn dx_asymptotic(
    moments: &MomentSet,
    m: u64,
    n: u32,
    d: u32,
    lattice: &LatticeClass,
) -> DxAsymptotic {
    let ml = m as f64 * (d as f64).ln();
    let nf = n as f64;
    let p1 = moments.psi_prime;
    let p2 = moments.psi_double_prime;
    let mut v = ml * ml / nf * (p1 / 2.0);
    if lattice.kind == LatticeKind::NonLattice {
        v += ml.powi(3) / (nf * nf) * (p2 / 6.0 - p1 * p1 / 2.0);
        let w = p2 / (2.0 * p1) - p1;
        v += ml * ml / (nf * nf) * w * w;
    }
    DxAsymptotic { value: v, in_regime: ml <= nf / 10.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{moments, SiteSpectrum};
    use approx::assert_relative_eq;

    fn fig_moments() -> (MomentSet, MomentSet) {
        let s = SiteSpectrum::qubit_pm1();
        (moments(&s, 1.0 / 30.0).unwrap(), moments(&s, 1.0 / 15.0).unwrap())
    }

    #[test]
    fn c1_two_paths() {
        let (mh, ml) = fig_moments();
        let bh = 1.0 / 30.0;
        let bl = 1.0 / 15.0;
        let direct = coeff_c1(&mh, &ml, bh, bl);
        let via_psi = (mh.psi_prime + ml.psi_prime) * bh * bh / (2.0 * bl);
        assert_relative_eq!(direct, via_psi, max_relative = 1e-13);
        assert!(direct > 0.0);
    }

    #[test]
    fn c1_decreases_with_variance() {
        let s = SiteSpectrum::qubit_pm1();
        let s_wide = SiteSpectrum::new(vec![3.0, -3.0]).unwrap();
        let bh = 0.05;
        let bl = 0.1;
        let narrow = coeff_c1(
            &moments(&s, bh).unwrap(),
            &moments(&s, bl).unwrap(),
            bh,
            bl,
        );
        let wide = coeff_c1(
            &moments(&s_wide, bh).unwrap(),
            &moments(&s_wide, bl).unwrap(),
            bh,
            bl,
        );
        assert!(wide < narrow);
    }

    #[test]
    fn c2_skew_cancellation_at_equal_beta() {
        // identical symmetric two-level baths at the same beta: the two
        // skewness terms cancel pairwise.
        let s = SiteSpectrum::qubit_pm1();
        let b = 0.4;
        let m = moments(&s, b).unwrap();
        let got = coeff_c2(&m, &m, b, b);
        let no_skew = (1.0 / (2.0 * b.powi(4) * m.variance * m.variance)
            + 1.0 / (2.0 * b.powi(4) * m.variance * m.variance))
            * b.powi(3)
            / b;
        assert_relative_eq!(got, no_skew, max_relative = 1e-12);
    }

    #[test]
    fn d1_positive_and_dimensional_scaling() {
        let (mh, ml) = fig_moments();
        let bh = 1.0 / 30.0;
        let bl = 1.0 / 15.0;
        assert!(coeff_d1(&mh, &ml, bh, bl) > 0.0);
        // doubling all levels and halving betas doubles q; c1*q/n invariant
        let s2 = SiteSpectrum::new(vec![2.0, -2.0]).unwrap();
        let mh2 = moments(&s2, bh / 2.0).unwrap();
        let ml2 = moments(&s2, bl / 2.0).unwrap();
        let c1a = coeff_c1(&mh, &ml, bh, bl);
        let c1b = coeff_c1(&mh2, &ml2, bh / 2.0, bl / 2.0);
        let q = 3.0;
        let n = 100.0;
        assert_relative_eq!(c1a * q / n, c1b * (2.0 * q) / n, max_relative = 1e-12);
    }

    #[test]
    fn d1_fig2_value() {
        // independently recomputed anchor for the documented setup; the
        // documented reference rounds to 14343
        let (mh, ml) = fig_moments();
        let d1 = coeff_d1(&mh, &ml, 1.0 / 30.0, 1.0 / 15.0);
        assert_relative_eq!(d1, 14343.73, max_relative = 1e-4);
    }

    #[test]
    fn d1_matches_psi_form() {
        let (mh, ml) = fig_moments();
        let bh = 1.0 / 30.0;
        let bl = 1.0 / 15.0;
        let term = |m: &crate::bath::MomentSet| {
            let x = m.psi_double_prime / (2.0 * m.psi_prime) - m.psi_prime;
            x * x
        };
        let via_psi = (term(&mh) + term(&ml)) * bh * bh / bl;
        assert_relative_eq!(coeff_d1(&mh, &ml, bh, bl), via_psi, max_relative = 1e-12);
    }

    #[test]
    fn expansion_orders_differ_by_c2_term() {
        let (mh, ml) = fig_moments();
        let bh = 1.0 / 30.0;
        let bl = 1.0 / 15.0;
        let c = coeffs(&mh, &ml, bh, bl);
        let q = 50.0;
        let n = 10_000;
        let e1 = eta_thermo_expansion(&c, bh, bl, q, n, 1);
        let e2 = eta_thermo_expansion(&c, bh, bl, q, n, 2);
        assert_relative_eq!(
            e1 - e2,
            c.c2 * (q / n as f64).powi(2),
            max_relative = 1e-12
        );
        // q = 0 gives Carnot
        assert_eq!(eta_thermo_expansion(&c, bh, bl, 0.0, n, 2), 0.5);
    }

    #[test]
    fn protocol_expansion_vs_thermo_expansion() {
        let (mh, ml) = fig_moments();
        let bh = 1.0 / 30.0;
        let bl = 1.0 / 15.0;
        let c = coeffs(&mh, &ml, bh, bl);
        let q = 50.0;
        let n = 10_000;
        let nl = LatticeClass::non_lattice();
        let diff = eta_thermo_expansion(&c, bh, bl, q, n, 2)
            - eta_protocol_expansion(&c, bh, bl, q, n, &nl);
        assert_relative_eq!(diff, c.d1 * q / (n as f64 * n as f64), max_relative = 1e-10);
    }

    #[test]
    fn block_size_fig1_point() {
        let n = 10_000u32;
        let q = 0.3 * (n as f64).powf(2.0 / 3.0);
        let sigma2 = 1.0 / (1.0f64 / 30.0).cosh().powi(2);
        let m = block_size_m(1.0 / 30.0, q, n, sigma2, 2).unwrap();
        assert_eq!(m, 8);
        // q -> 0+ gives m = 0
        assert_eq!(block_size_m(1.0 / 30.0, 1e-12, n, sigma2, 2).unwrap(), 0);
        // larger alphabet shrinks m: floor of halved argument
        let m4 = block_size_m(1.0 / 30.0, q, n, sigma2, 4).unwrap();
        assert!(m4 <= m && m4 >= m / 2);
        // m >= n rejected
        assert!(block_size_m(5.0, 1e5, 10, sigma2, 2).is_err());
    }

    #[test]
    fn lattice_classification() {
        let qubit = SiteSpectrum::qubit_pm1();
        let c = lattice_classify(&qubit, 1e-9);
        assert_eq!(c.kind, LatticeKind::Lattice);
        assert_relative_eq!(c.span.unwrap(), 2.0, max_relative = 1e-12);

        let irr = SiteSpectrum::new(vec![0.0, 1.0, 2f64.sqrt()]).unwrap();
        assert_eq!(lattice_classify(&irr, 1e-9).kind, LatticeKind::NonLattice);

        let grid = SiteSpectrum::new(vec![0.0, 2.0, 6.0]).unwrap();
        let c = lattice_classify(&grid, 1e-9);
        assert_eq!(c.kind, LatticeKind::Lattice);
        assert_relative_eq!(c.span.unwrap(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn dx_asymptotic_regime_flag() {
        let s = SiteSpectrum::qubit_pm1();
        let m = moments(&s, 0.3).unwrap();
        let lat = lattice_classify(&s, 1e-9);
        let a = dx_asymptotic(&m, 0, 200, 2, &lat);
        assert_eq!(a.value, 0.0);
        assert!(a.in_regime);
        let b = dx_asymptotic(&m, 150, 200, 2, &lat);
        assert!(!b.in_regime);
    }
}
