//! Single-species bath model: site spectra, Gibbs weights, and the energy
//! moments / cumulant quantities every other module consumes.
//!
//! Conventions: k_B = 1, so `beta * energy` is dimensionless and entropies
//! are in nats. `beta = 0` is accepted where it means the uniform
//! distribution, and rejected where energies must be recoverable from
//! probabilities.

use crate::error::{Error, Result};
use crate::num::Dd;
use serde::{Deserialize, Serialize};

/// The d single-particle energy levels of one bath species.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteSpectrum {
    levels: Vec<f64>,
}

impl SiteSpectrum {
    /// Validates: at least two levels, all finite, not all equal.
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 energy levels, got {}",
                levels.len()
            )));
        }
        if levels.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite energy level"));
        }
        let first = levels[0];
        if levels.iter().all(|&x| x == first) {
            return Err(Error::degenerate(
                "all levels equal; energy variance is zero",
            ));
        }
        Ok(SiteSpectrum { levels })
    }

    /// The standard two-level spectrum {+1, -1}.
    pub fn qubit_pm1() -> Self {
        SiteSpectrum { levels: vec![1.0, -1.0] }
    }

    pub fn d(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn min_level(&self) -> f64 {
        self.levels.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_level(&self) -> f64 {
        self.levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Number of levels attaining the minimum (ground degeneracy).
    pub fn ground_degeneracy(&self) -> u32 {
        let m = self.min_level();
        self.levels.iter().filter(|&&x| x == m).count() as u32
    }

    /// log Z(beta) per site, computed with the smallest level factored out.
    pub fn log_z(&self, beta: f64) -> Dd {
        self.log_z_dd(Dd::from_f64(beta))
    }

    pub fn log_z_dd(&self, beta: Dd) -> Dd {
        let hmin = self.min_level();
        let mut z = Dd::ZERO;
        for &h in &self.levels {
            z += (-(beta * Dd::from_f64(h - hmin))).exp();
        }
        z.ln() - beta * Dd::from_f64(hmin)
    }

    /// Per-site log Gibbs weights `-beta*h - log Z`, in level order.
    pub fn log_probs(&self, beta: f64) -> Vec<Dd> {
        self.log_probs_dd(Dd::from_f64(beta))
    }

    pub fn log_probs_dd(&self, beta: Dd) -> Vec<Dd> {
        let lz = self.log_z_dd(beta);
        self.levels
            .iter()
            .map(|&h| -(beta * Dd::from_f64(h)) - lz)
            .collect()
    }

    /// Per-site mean energy at inverse temperature beta.
    pub fn mean_energy(&self, beta: f64) -> Dd {
        self.mean_energy_dd(Dd::from_f64(beta))
    }

    pub fn mean_energy_dd(&self, beta: Dd) -> Dd {
        let lp = self.log_probs_dd(beta);
        let mut e = Dd::ZERO;
        for (&h, &l) in self.levels.iter().zip(&lp) {
            e += Dd::from_f64(h) * l.exp();
        }
        e
    }

    /// Per-site energy variance at beta.
    pub fn variance(&self, beta: f64) -> Dd {
        self.variance_dd(Dd::from_f64(beta))
    }

    pub fn variance_dd(&self, beta: Dd) -> Dd {
        let lp = self.log_probs_dd(beta);
        let mu = self.mean_energy_dd(beta);
        let mut v = Dd::ZERO;
        for (&h, &l) in self.levels.iter().zip(&lp) {
            let dh = Dd::from_f64(h) - mu;
            v += dh.sqr() * l.exp();
        }
        v
    }

    /// Per-site Shannon entropy of the Gibbs distribution, in nats.
    /// S = beta * <h> + log Z.
    pub fn entropy(&self, beta: f64) -> Dd {
        self.entropy_dd(Dd::from_f64(beta))
    }

    pub fn entropy_dd(&self, beta: Dd) -> Dd {
        beta * self.mean_energy_dd(beta) + self.log_z_dd(beta)
    }
}

/// One bath: a site spectrum, an inverse temperature, and a particle count.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BathSpec {
    pub site: SiteSpectrum,
    pub beta: f64,
    pub n: u32,
}

impl BathSpec {
    pub fn new(site: SiteSpectrum, beta: f64, n: u32) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::invalid(format!(
                "inverse temperature must be finite and >= 0, got {beta}"
            )));
        }
        if n == 0 {
            return Err(Error::invalid("particle count must be >= 1"));
        }
        Ok(BathSpec { site, beta, n })
    }

    pub fn d(&self) -> u32 {
        self.site.d()
    }
}

/// Gibbs probabilities for a single site. `beta = 0` means uniform.
pub fn gibbs_site_probs(site: &SiteSpectrum, beta: f64) -> Result<Vec<f64>> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::invalid(format!(
            "inverse temperature must be finite and >= 0, got {beta}"
        )));
    }
    Ok(site
        .log_probs(beta)
        .iter()
        .map(|l| l.exp().to_f64())
        .collect())
}

/// Energy moments and cumulant-derived quantities of one site at `beta`.
///
/// `psi_prime` and `psi_double_prime` are the first two derivatives of the
/// inverse of s -> d/ds log(sum_a p_a^s), evaluated at -S:
/// psi' = 1/(beta^2 sigma^2), psi'' = gamma/(beta^3 sigma^3).
/// (The third cumulant of ln p is -beta^3 gamma sigma^3 — the sign flip
/// against the energy skewness matters and is pinned by a
/// finite-difference test.)
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentSet {
    pub log_partition: f64,
    pub mean_energy: f64,
    pub variance: f64,
    pub skewness: f64,
    pub site_entropy: f64,
    pub psi_prime: f64,
    pub psi_double_prime: f64,
}

/// Full moment set of a site spectrum at `beta > 0`.
pub fn moments(site: &SiteSpectrum, beta: f64) -> Result<MomentSet> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid(format!(
            "moments require beta > 0, got {beta}"
        )));
    }
    let lp = site.log_probs(beta);
    let mu = site.mean_energy(beta);
    let mut m2 = Dd::ZERO;
    let mut m3 = Dd::ZERO;
    for (&h, &l) in site.levels().iter().zip(&lp) {
        let dh = Dd::from_f64(h) - mu;
        let p = l.exp();
        m2 += dh.sqr() * p;
        m3 += dh.sqr() * dh * p;
    }
    let var = m2.to_f64();
    if var <= 0.0 {
        return Err(Error::degenerate("zero energy variance"));
    }
    let sigma = m2.sqrt();
    let gamma = (m3 / (sigma * sigma * sigma)).to_f64();
    let b = Dd::from_f64(beta);
    let psi_prime = (Dd::ONE / (b.sqr() * m2)).to_f64();
    // psi'' (-S) = -phi'''(1)/phi''(1)^3 with phi'''(1) = kappa_3(ln p)
    //            = -beta^3 gamma sigma^3, so psi'' = +gamma/(beta^3 sigma^3)
    let psi_double_prime =
        ((m3 / (sigma * sigma * sigma)) / (b.sqr() * b * sigma * sigma * sigma)).to_f64();
    Ok(MomentSet {
        log_partition: site.log_z(beta).to_f64(),
        mean_energy: mu.to_f64(),
        variance: var,
        skewness: gamma,
        site_entropy: site.entropy(beta).to_f64(),
        psi_prime,
        psi_double_prime,
    })
}

/// Total Shannon entropy of the n-particle Gibbs state (n x per-site).
pub fn entropy_of(bath: &BathSpec) -> f64 {
    (Dd::from_f64(bath.n as f64) * bath.site.entropy(bath.beta)).to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_at_beta_zero() {
        let s = SiteSpectrum::qubit_pm1();
        let p = gibbs_site_probs(&s, 0.0).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn two_level_weights() {
        // levels {+1,-1} at beta=1: (e^-1, e^1)/(e^-1 + e^1)
        let s = SiteSpectrum::qubit_pm1();
        let p = gibbs_site_probs(&s, 1.0).unwrap();
        let z = (-1.0f64).exp() + 1.0f64.exp();
        assert_relative_eq!(p[0], (-1.0f64).exp() / z, max_relative = 1e-15);
        assert_relative_eq!(p[1], 1.0f64.exp() / z, max_relative = 1e-15);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_rejected() {
        assert!(SiteSpectrum::new(vec![0.0, 0.0]).is_err());
        assert!(SiteSpectrum::new(vec![1.0]).is_err());
        assert!(SiteSpectrum::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn negative_beta_rejected() {
        let s = SiteSpectrum::qubit_pm1();
        assert!(gibbs_site_probs(&s, -0.5).is_err());
        assert!(BathSpec::new(s, -1.0, 4).is_err());
    }

    #[test]
    fn qubit_moments_closed_form() {
        // levels {+1,-1}: sigma^2 = sech^2(beta), gamma = 2 sinh(beta).
        let s = SiteSpectrum::qubit_pm1();
        for beta in [0.03, 0.3, 1.0, 2.5] {
            let m = moments(&s, beta).unwrap();
            let sech2 = 1.0 / beta.cosh().powi(2);
            assert_relative_eq!(m.variance, sech2, max_relative = 1e-14);
            assert_relative_eq!(m.skewness, 2.0 * beta.sinh(), max_relative = 1e-13);
            assert_relative_eq!(m.mean_energy, -beta.tanh(), max_relative = 1e-14);
            // definitional identity psi' * beta^2 * sigma^2 = 1
            assert_relative_eq!(
                m.psi_prime * beta * beta * m.variance,
                1.0,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn qubit_symmetric_at_beta_zero_limit() {
        let s = SiteSpectrum::qubit_pm1();
        let m = moments(&s, 1e-9).unwrap();
        assert!(m.mean_energy.abs() < 1e-8);
        assert_relative_eq!(m.variance, 1.0, max_relative = 1e-9);
        assert!(m.skewness.abs() < 1e-8);
    }

    #[test]
    fn moments_match_direct_summation() {
        // d = 4 random-ish spectrum: direct central-moment sums.
        let s = SiteSpectrum::new(vec![0.3, -1.2, 2.7, 0.9]).unwrap();
        let beta = 0.7;
        let m = moments(&s, beta).unwrap();
        let probs = gibbs_site_probs(&s, beta).unwrap();
        let mu: f64 = s.levels().iter().zip(&probs).map(|(h, p)| h * p).sum();
        let var: f64 = s
            .levels()
            .iter()
            .zip(&probs)
            .map(|(h, p)| (h - mu).powi(2) * p)
            .sum();
        let m3: f64 = s
            .levels()
            .iter()
            .zip(&probs)
            .map(|(h, p)| (h - mu).powi(3) * p)
            .sum();
        assert_relative_eq!(m.mean_energy, mu, max_relative = 1e-13);
        assert_relative_eq!(m.variance, var, max_relative = 1e-13);
        assert_relative_eq!(m.skewness, m3 / var.powf(1.5), max_relative = 1e-12);
    }

    #[test]
    fn psi_identities_vs_numeric_derivative() {
        // phi(s) = log sum p^s; psi = (phi')^{-1}; check psi'(-S) = 1/phi''(1)
        // against a central difference of phi'.
        let s = SiteSpectrum::new(vec![0.0, 1.0, 2.5]).unwrap();
        let beta = 0.8;
        let m = moments(&s, beta).unwrap();
        let probs = gibbs_site_probs(&s, beta).unwrap();
        let phi_prime = |t: f64| -> f64 {
            let num: f64 = probs.iter().map(|p| p.powf(t) * p.ln()).sum();
            let den: f64 = probs.iter().map(|p| p.powf(t)).sum();
            num / den
        };
        let h = 1e-5;
        let phi2 = (phi_prime(1.0 + h) - phi_prime(1.0 - h)) / (2.0 * h);
        assert_relative_eq!(m.psi_prime, 1.0 / phi2, max_relative = 1e-6);
        // phi'(1) = -S
        assert_relative_eq!(phi_prime(1.0), -m.site_entropy, max_relative = 1e-12);
        // second difference needs a wider step to beat roundoff
        let h = 1e-4;
        let phi3 = (phi_prime(1.0 + h) - 2.0 * phi_prime(1.0) + phi_prime(1.0 - h)) / (h * h);
        assert_relative_eq!(
            m.psi_double_prime,
            -phi3 / phi2.powi(3),
            max_relative = 1e-4
        );
    }

    #[test]
    fn entropy_limits() {
        let s = SiteSpectrum::qubit_pm1();
        let b0 = BathSpec::new(s.clone(), 0.0, 7).unwrap();
        assert_relative_eq!(entropy_of(&b0), 7.0 * 2.0f64.ln(), max_relative = 1e-15);
        // beta*gap >= 50: entropy collapses to ground degeneracy (= log 1 = 0)
        let bimp = BathSpec::new(s.clone(), 30.0, 3).unwrap();
        assert!(entropy_of(&bimp) < 1e-10);
        // direct two-term evaluation at beta = 1/30
        let b = BathSpec::new(s.clone(), 1.0 / 30.0, 1).unwrap();
        let p = gibbs_site_probs(&s, 1.0 / 30.0).unwrap();
        let h: f64 = p.iter().map(|x| -x * x.ln()).sum();
        assert_relative_eq!(entropy_of(&b), h, max_relative = 1e-13);
    }
}
